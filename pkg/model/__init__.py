# model package
