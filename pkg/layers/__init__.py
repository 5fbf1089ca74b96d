# layers package
