from app.input import parse_limit, read_query
from app.output import render_link
from app.transform import build_url, find_first


def main(raw, raw_limit):
    query = read_query(raw)
    url = build_url(query)
    scheme = find_first(["http://", "https://"], url)
    try:
        limit = parse_limit(raw_limit)
    except ValueError:
        limit = 10
    page = render_link(url)
    return page


if __name__ == "__main__":
    import sys

    print(main(sys.argv[1], sys.argv[2]))
