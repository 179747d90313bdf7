def render_link(url):
    label = "Results for " + url
    html = '<a href="' + url + '">' + label + "</a>"
    return html
