class Calculator:
    def add(self, a, b):
        return a + b

    def divide(self, a, b):
        return a / b


def parse_expression(text):
    parts = text.split()
    return parts[0], parts[1], parts[2]
