var http = require('http');
var url = require('url');
var path = require('path');
var fs = require('fs');

var base = path.resolve(__dirname, 'files');

http.createServer(function (req, res) {
  var pathname = url.parse(req.url).pathname;
  var resolved = path.resolve(base, '.' + pathname);
  if (resolved.indexOf(base) !== 0) {
    res.writeHead(403);
    res.end('outside base');
    return;
  }
  fs.readFile(resolved, function (err, data) {
    if (err) {
      res.writeHead(404);
      res.end('no file');
      return;
    }
    res.writeHead(200);
    res.end(data);
  });
}).listen(8928);
