const http = require('http');
const url = require('url');
const path = require('path');
const fs = require('fs');

const routes = ['/', '/index.html', '/about.html', '/style.css'];

http.createServer((req, res) => {
  const pathname = url.parse(req.url).pathname;
  if (!routes.includes(pathname)) {
    res.writeHead(404, { 'Content-Type': 'text/plain' });
    res.end('unknown route');
    return;
  }
  const file = path.join(__dirname, 'public', pathname === '/' ? 'index.html' : pathname);
  fs.readFile(file, (err, data) => {
    if (err) {
      res.writeHead(404);
      res.end('not found');
      return;
    }
    res.writeHead(200);
    res.end(data);
  });
}).listen(8925);
