# Performance tests package
