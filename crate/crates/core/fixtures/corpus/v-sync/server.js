const http = require('http');
const url = require('url');
const path = require('path');
const fs = require('fs');

const root = process.cwd();

http.createServer((req, res) => {
  const pathname = url.parse(req.url).pathname;
  let target = path.join(root, pathname);
  try {
    if (fs.statSync(target).isDirectory()) {
      target = path.join(target, 'index.html');
    }
    const body = fs.readFileSync(target);
    res.writeHead(200);
    res.end(body);
  } catch (err) {
    res.writeHead(404, { 'Content-Type': 'text/plain' });
    res.end('no such file');
  }
}).listen(8904);
