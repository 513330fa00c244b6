const http = require('http');
const url = require('url');
const path = require('path');
const fs = require('fs');

const docs = path.join(__dirname, 'public');

http.createServer((req, res) => {
  const rawPath = url.parse(req.url).pathname;
  const decoded = decodeURIComponent(rawPath);
  if (decoded.includes('..')) {
    res.writeHead(403, { 'Content-Type': 'text/plain' });
    res.end('no');
    return;
  }
  const file = path.join(docs, decoded === '/' ? 'index.html' : decoded);
  fs.readFile(file, (err, data) => {
    if (err) {
      res.writeHead(404, { 'Content-Type': 'text/plain' });
      res.end('gone');
      return;
    }
    res.writeHead(200);
    res.end(data);
  });
}).listen(8927);
