def read_query(raw):
    text = raw.strip()
    return text


def parse_limit(raw):
    limit = int(raw)
    return limit
