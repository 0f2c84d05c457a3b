# Core algorithms and mathematical models
