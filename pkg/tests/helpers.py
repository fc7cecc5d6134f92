"""Small in-process apps used as callback and TD endpoints in tests."""

from hypercoord.env.http import App, Response


class Sink(App):
    """Records every POST it receives; can be told to fail."""

    def __init__(self, network, base, status=200):
        super().__init__()
        self.received = []
        self.status = status
        self.route("POST", "{name}", self._post)
        network.mount(base, self)

    def _post(self, req):
        self.received.append(req.json())
        return Response.of_json({}, self.status)

    def events(self):
        return [m for m in self.received if m.get("type") != "probe"]
