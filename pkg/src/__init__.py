# qrandom package
