# graphs package
