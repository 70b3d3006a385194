x = 1 / 0
