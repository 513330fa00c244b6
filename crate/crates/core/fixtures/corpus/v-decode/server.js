const http = require('http');
const url = require('url');
const path = require('path');
const fs = require('fs');

const webroot = path.join(__dirname, 'public');

http.createServer((req, res) => {
  const rawPath = url.parse(req.url).pathname;
  if (rawPath.includes('..')) {
    res.writeHead(400, { 'Content-Type': 'text/plain' });
    res.end('bad request');
    return;
  }
  const decoded = decodeURIComponent(rawPath);
  const target = decoded === '/' ? path.join(webroot, 'index.html') : path.join(webroot, decoded);
  fs.readFile(target, (err, data) => {
    if (err) {
      res.writeHead(404, { 'Content-Type': 'text/plain' });
      res.end('not found');
      return;
    }
    res.writeHead(200);
    res.end(data);
  });
}).listen(8908);
