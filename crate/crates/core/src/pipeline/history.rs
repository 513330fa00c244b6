//! When did the vulnerable pattern enter the repository?
//!
//! Binary search over the commit history, re-running the detector at each
//! probe point. Assumes the pattern, once introduced, stays until fixed —
//! good enough for an approximate introduction year.

use std::path::{Path, PathBuf};
use std::process::Command;

use crate::detector::{detect_traversal, Verdict};

#[derive(Debug, Clone)]
pub struct CommitInfo {
    pub id: String,
    pub year: i32,
}

/// Read access to a repository's history, oldest commit first.
pub trait VcsHistory {
    fn commits(&self) -> Vec<CommitInfo>;
    fn file_at(&self, commit_id: &str, path: &str) -> Option<String>;
}

/// Git CLI-backed history.
pub struct GitHistory {
    pub repo_dir: PathBuf,
}

impl GitHistory {
    pub fn open(repo_dir: &Path) -> Option<Self> {
        if repo_dir.join(".git").exists() {
            Some(GitHistory {
                repo_dir: repo_dir.to_path_buf(),
            })
        } else {
            None
        }
    }

    fn git(&self, args: &[&str]) -> Option<String> {
        let out = Command::new("git")
            .arg("-C")
            .arg(&self.repo_dir)
            .args(args)
            .output()
            .ok()?;
        if !out.status.success() {
            return None;
        }
        Some(String::from_utf8_lossy(&out.stdout).into_owned())
    }
}

impl VcsHistory for GitHistory {
    fn commits(&self) -> Vec<CommitInfo> {
        let Some(log) = self.git(&["log", "--reverse", "--format=%H %ad", "--date=format:%Y"])
        else {
            return Vec::new();
        };
        log.lines()
            .filter_map(|line| {
                let (id, year) = line.split_once(' ')?;
                Some(CommitInfo {
                    id: id.to_string(),
                    year: year.trim().parse().ok()?,
                })
            })
            .collect()
    }

    fn file_at(&self, commit_id: &str, path: &str) -> Option<String> {
        self.git(&["show", &format!("{commit_id}:{path}")])
    }
}

/// In-memory history for tests.
pub struct MemHistory {
    pub entries: Vec<(CommitInfo, Option<String>)>,
}

impl VcsHistory for MemHistory {
    fn commits(&self) -> Vec<CommitInfo> {
        self.entries.iter().map(|(c, _)| c.clone()).collect()
    }

    fn file_at(&self, commit_id: &str, _path: &str) -> Option<String> {
        self.entries
            .iter()
            .find(|(c, _)| c.id == commit_id)
            .and_then(|(_, content)| content.clone())
    }
}

/// Year of the earliest commit in which the file's pattern is detected as
/// vulnerable; None when there is no history (shallow snapshot) or the
/// pattern never appears.
pub fn vuln_intro_date(vcs: &dyn VcsHistory, file_path: &str) -> Option<i32> {
    let commits = vcs.commits();
    if commits.is_empty() {
        return None;
    }
    let vulnerable_at = |idx: usize| -> bool {
        vcs.file_at(&commits[idx].id, file_path)
            .and_then(|content| detect_traversal(&content))
            .is_some_and(|f| f.verdict == Verdict::Vulnerable)
    };
    if !vulnerable_at(commits.len() - 1) {
        // not vulnerable at head: nothing to date
        return None;
    }
    // binary search for the first vulnerable commit
    let (mut lo, mut hi) = (0usize, commits.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if vulnerable_at(mid) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Some(commits[lo].year)
}

#[cfg(test)]
mod tests {
    use super::*;

    const VULN: &str = r#"
var http = require("http"), url = require("url"), path = require("path"), fs = require("fs");
http.createServer(function(req, res) {
  var uri = url.parse(req.url).pathname;
  var filename = path.join(process.cwd(), uri);
  fs.readFile(filename, function(err, data) { res.end(data); });
}).listen(8080);
"#;
    const BENIGN: &str = "console.log('hello');\n";

    fn commit(id: &str, year: i32, content: Option<&str>) -> (CommitInfo, Option<String>) {
        (
            CommitInfo {
                id: id.into(),
                year,
            },
            content.map(String::from),
        )
    }

    #[test]
    fn pattern_introduced_mid_history() {
        let vcs = MemHistory {
            entries: vec![
                commit("c1", 2015, Some(BENIGN)),
                commit("c2", 2017, Some(VULN)),
                commit("c3", 2018, Some(VULN)),
                commit("c4", 2020, Some(VULN)),
                commit("c5", 2022, Some(VULN)),
            ],
        };
        assert_eq!(vuln_intro_date(&vcs, "server.js"), Some(2017));
    }

    #[test]
    fn pattern_since_initial_commit() {
        let vcs = MemHistory {
            entries: vec![
                commit("c1", 2012, Some(VULN)),
                commit("c2", 2013, Some(VULN)),
            ],
        };
        assert_eq!(vuln_intro_date(&vcs, "server.js"), Some(2012));
    }

    #[test]
    fn shallow_snapshot_has_no_date() {
        let vcs = MemHistory { entries: vec![] };
        assert_eq!(vuln_intro_date(&vcs, "server.js"), None);
    }

    #[test]
    fn git_backed_history() {
        let dir = tempfile::tempdir().unwrap();
        let repo = dir.path();
        let run = |args: &[&str]| {
            let ok = Command::new("git")
                .arg("-C")
                .arg(repo)
                .args(args)
                .env("GIT_AUTHOR_NAME", "t")
                .env("GIT_AUTHOR_EMAIL", "t@example.com")
                .env("GIT_COMMITTER_NAME", "t")
                .env("GIT_COMMITTER_EMAIL", "t@example.com")
                .output()
                .unwrap();
            assert!(
                ok.status.success(),
                "git {args:?}: {}",
                String::from_utf8_lossy(&ok.stderr)
            );
        };
        run(&["init", "-q"]);
        let commit_with_date = |content: &str, date: &str, msg: &str| {
            std::fs::write(repo.join("server.js"), content).unwrap();
            run(&["add", "server.js"]);
            let ok = Command::new("git")
                .arg("-C")
                .arg(repo)
                .args(["commit", "-q", "-m", msg])
                .env("GIT_AUTHOR_NAME", "t")
                .env("GIT_AUTHOR_EMAIL", "t@example.com")
                .env("GIT_COMMITTER_NAME", "t")
                .env("GIT_COMMITTER_EMAIL", "t@example.com")
                .env("GIT_AUTHOR_DATE", date)
                .env("GIT_COMMITTER_DATE", date)
                .output()
                .unwrap();
            assert!(
                ok.status.success(),
                "git commit: {}",
                String::from_utf8_lossy(&ok.stderr)
            );
        };
        commit_with_date(BENIGN, "2016-03-01T12:00:00", "initial");
        commit_with_date(VULN, "2019-07-01T12:00:00", "add static server");
        let tweaked = format!("{VULN}\n// serve everything\n");
        commit_with_date(&tweaked, "2021-01-01T12:00:00", "tweak");

        let history = GitHistory::open(repo).expect("git repo");
        assert_eq!(vuln_intro_date(&history, "server.js"), Some(2019));

        // a plain directory is not history
        let plain = tempfile::tempdir().unwrap();
        assert!(GitHistory::open(plain.path()).is_none());
    }
}
