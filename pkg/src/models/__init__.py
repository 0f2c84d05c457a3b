# Data models and structures
