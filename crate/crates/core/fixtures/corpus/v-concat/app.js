var http = require('http');
var url = require('url');
var fs = require('fs');

http.createServer(function (req, res) {
  var uri = url.parse(req.url).pathname;
  var file = './static' + uri;
  fs.readFile(file, function (err, content) {
    if (err) {
      res.writeHead(500, { 'Content-Type': 'text/plain' });
      res.end('server error');
      return;
    }
    res.writeHead(200);
    res.end(content);
  });
}).listen(8903);
