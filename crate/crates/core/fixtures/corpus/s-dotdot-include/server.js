var http = require("http");
var url = require("url");
var path = require("path");
var fs = require("fs");

http.createServer(function (request, response) {
  var uri = url.parse(request.url).pathname;
  if (uri.includes('..')) {
    response.writeHead(403, { "Content-Type": "text/plain" });
    response.end("Forbidden");
    return;
  }
  var filename = path.join(process.cwd(), uri);
  fs.readFile(filename, "binary", function (err, file) {
    if (err) {
      response.writeHead(404, { "Content-Type": "text/plain" });
      response.end("404 Not Found");
      return;
    }
    response.writeHead(200);
    response.write(file, "binary");
    response.end();
  });
}).listen(8921);
