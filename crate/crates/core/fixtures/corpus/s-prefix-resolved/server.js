const http = require('http');
const url = require('url');
const path = require('path');
const fs = require('fs');

const root = path.join(__dirname, 'public');

http.createServer((req, res) => {
  const pathname = url.parse(req.url).pathname;
  const full = path.join(root, pathname);
  if (!full.startsWith(root)) {
    res.writeHead(403, { 'Content-Type': 'text/plain' });
    res.end('denied');
    return;
  }
  fs.readFile(full, (err, data) => {
    if (err) {
      res.writeHead(404);
      res.end('not found');
      return;
    }
    res.writeHead(200);
    res.end(data);
  });
}).listen(8924);
