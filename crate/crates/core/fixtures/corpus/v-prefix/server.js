var http = require('http');
var url = require('url');
var path = require('path');
var fs = require('fs');

http.createServer(function (req, res) {
  var pathname = url.parse(req.url).pathname;
  // only the image area is public
  if (pathname.indexOf('/images/') !== 0) {
    res.writeHead(404, { 'Content-Type': 'text/plain' });
    res.end('not found');
    return;
  }
  var resource = path.join(process.cwd(), pathname);
  fs.readFile(resource, function (err, data) {
    if (err) {
      res.writeHead(404, { 'Content-Type': 'text/plain' });
      res.end('not found');
      return;
    }
    res.writeHead(200);
    res.end(data);
  });
}).listen(8909);
