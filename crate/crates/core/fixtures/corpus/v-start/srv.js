const http = require('http');
const url = require('url');
const path = require('path');
const fs = require('fs');

if (process.argv.indexOf('--listen') === -1) {
  console.error('usage: npm run start');
  process.exit(1);
}

const root = process.cwd();

http.createServer((req, res) => {
  const pathname = url.parse(req.url).pathname;
  const spot = path.join(root, pathname === '/' ? 'index.html' : pathname);
  fs.readFile(spot, (err, data) => {
    if (err) {
      res.writeHead(404);
      res.end('nothing here');
      return;
    }
    res.writeHead(200);
    res.end(data);
  });
}).listen(8912);
