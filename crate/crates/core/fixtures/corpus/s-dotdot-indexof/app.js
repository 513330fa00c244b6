var http = require('http');
var url = require('url');
var path = require('path');
var fs = require('fs');

http.createServer(function (req, res) {
  var uri = url.parse(req.url).pathname;
  if (uri.indexOf('..') !== -1) {
    res.writeHead(403);
    res.end('forbidden');
    return;
  }
  var filename = path.join(__dirname, 'public', uri);
  fs.readFile(filename, function (err, data) {
    if (err) {
      res.writeHead(404);
      res.end('not found');
      return;
    }
    res.writeHead(200);
    res.end(data);
  });
}).listen(8922);
