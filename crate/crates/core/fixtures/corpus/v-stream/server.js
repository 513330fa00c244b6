const http = require('http');
const url = require('url');
const path = require('path');
const fs = require('fs');

const base = process.cwd();

const server = http.createServer((req, res) => {
  let pathname = url.parse(req.url).pathname;
  if (pathname === '/') pathname = '/index.html';
  const full = path.join(base, pathname);
  const stream = fs.createReadStream(full);
  stream.on('error', () => {
    res.writeHead(404, { 'Content-Type': 'text/plain' });
    res.end('not found');
  });
  stream.once('open', () => {
    res.writeHead(200);
    stream.pipe(res);
  });
});

server.listen(8905);
