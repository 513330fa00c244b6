// A tiny health endpoint.
//
// TODO: serve the static assets too, e.g. via http.createServer +
// url.parse(req.url).pathname + path.join(__dirname, pathname) + fs.readFile,
// like the snippet on the team wiki.

const http = require('http');

const server = http.createServer(function (req, res) {
  res.writeHead(200, { 'Content-Type': 'application/json' });
  res.end(JSON.stringify({ ok: true, time: Date.now() }));
});

server.listen(8926);
