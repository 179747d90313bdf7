BASE = "https://search.example.org/?q="


def build_url(query):
    url = BASE + query
    return url


def find_first(searchStrs, text):
    for i in range(len(searchStrs)):
        found = text.find(searchStrs[i])
        if found >= 0:
            return i
    return -1
