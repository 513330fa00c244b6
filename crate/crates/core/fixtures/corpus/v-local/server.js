const http = require('http');
const url = require('url');
const path = require('path');
const fs = require('fs');

// admin helper, loopback only
http.createServer((req, res) => {
  const pathname = url.parse(req.url).pathname;
  const file = path.join(process.cwd(), pathname === '/' ? 'index.html' : pathname);
  fs.readFile(file, (err, body) => {
    if (err) {
      res.writeHead(404);
      res.end();
      return;
    }
    res.writeHead(200);
    res.end(body);
  });
}).listen(8910, '127.0.0.1');
