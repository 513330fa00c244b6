const http = require('http');
const { parse } = require('url');
const path = require('path');
const fs = require('fs');

const docroot = path.join(__dirname, 'public');

http.createServer((req, res) => {
  const pathname = parse(req.url).pathname;
  const file = pathname === '/' ? path.join(docroot, 'index.html') : path.join(docroot, pathname);
  fs.promises.readFile(file)
    .then((data) => {
      res.writeHead(200);
      res.end(data);
    })
    .catch(() => {
      res.writeHead(404, { 'Content-Type': 'text/plain' });
      res.end('missing');
    });
}).listen(8906);
