const http = require('http');
const url = require('url');
const path = require('path');
const fs = require('fs');
const mime = require('mimelike');

const pub = path.join(__dirname, 'public');

http.createServer((req, res) => {
  let pathname = url.parse(req.url).pathname;
  if (pathname === '/') pathname = '/index.html';
  const abs = path.join(pub, pathname);
  fs.readFile(abs, (err, data) => {
    if (err) {
      res.writeHead(404, { 'Content-Type': 'text/plain' });
      res.end('404');
      return;
    }
    res.writeHead(200, { 'Content-Type': mime.lookup(abs) });
    res.end(data);
  });
}).listen(8911);
