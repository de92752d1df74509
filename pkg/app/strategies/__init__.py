# Strategies package
