var webServer = require("http");
var urlParser = require("url");
var { join } = require("path");
var filesystem = require("fs");

function onHit(q, s) {
  var loc = urlParser.parse(q.url).pathname;
  var tgt = join(process.cwd(), loc);
  filesystem.readFile(tgt, function (oops, stuff) {
    if (oops) {
      s.writeHead(404, { "Content-Type": "text/plain" });
      s.end("nope");
      return;
    }
    s.writeHead(200);
    s.end(stuff);
  });
}

webServer.createServer(onHit).listen(8907);
