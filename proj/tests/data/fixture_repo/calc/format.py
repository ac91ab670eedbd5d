def format_result(value):
    return "result: %s" % value


def format_error(message):
    return "error: " + message
