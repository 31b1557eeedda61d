version = '0.1.0.dev'
short_version = '0.1.0'
