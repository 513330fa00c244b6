var http = require('http');
var url = require('url');
var path = require('path');
var fs = require('fs');

var base = process.cwd();

http.createServer(function (req, res) {
  var raw = url.parse(req.url).pathname;
  if (path.normalize(raw) !== raw) {
    res.writeHead(400, { 'Content-Type': 'text/plain' });
    res.end('suspicious path');
    return;
  }
  var target = path.join(base, raw);
  fs.readFile(target, function (err, data) {
    if (err) {
      res.writeHead(404);
      res.end('nothing');
      return;
    }
    res.writeHead(200);
    res.end(data);
  });
}).listen(8923);
