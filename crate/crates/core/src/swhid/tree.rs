use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use super::{SwhidError, git_object_digest};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TreeEntry {
    File(Vec<u8>),
    Executable(Vec<u8>),
    /// Payload is the link target.
    Symlink(Vec<u8>),
    Dir(DirectoryTree),
}

impl TreeEntry {
    fn mode(&self) -> &'static str {
        match self {
            TreeEntry::File(_) => "100644",
            TreeEntry::Executable(_) => "100755",
            TreeEntry::Symlink(_) => "120000",
            TreeEntry::Dir(_) => "40000",
        }
    }

    fn digest(&self) -> Result<[u8; 20], SwhidError> {
        match self {
            TreeEntry::File(b) | TreeEntry::Executable(b) | TreeEntry::Symlink(b) => {
                Ok(git_object_digest("blob", b))
            }
            TreeEntry::Dir(t) => t.digest(),
        }
    }
}

/// An in-memory source tree. Entry names are unique by construction.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DirectoryTree {
    entries: BTreeMap<String, TreeEntry>,
}

pub(crate) fn check_entry_name(name: &str) -> Result<(), SwhidError> {
    if name.is_empty() || name.contains('/') || name.contains('\0') {
        Err(SwhidError::InvalidEntryName(name.to_string()))
    } else {
        Ok(())
    }
}

impl DirectoryTree {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces an entry.
    pub fn insert(&mut self, name: impl Into<String>, entry: TreeEntry) -> Result<(), SwhidError> {
        let name = name.into();
        check_entry_name(&name)?;
        self.entries.insert(name, entry);
        Ok(())
    }

    pub fn with(mut self, name: impl Into<String>, entry: TreeEntry) -> Result<Self, SwhidError> {
        self.insert(name, entry)?;
        Ok(self)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &TreeEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Reads a tree from disk. Unix permission bits decide between file and
    /// executable; symlinks are stored with their target, not followed.
    pub fn from_path(root: &Path) -> io::Result<Self> {
        let mut tree = DirectoryTree::new();
        for dirent in fs::read_dir(root)? {
            let dirent = dirent?;
            let name = dirent.file_name().to_string_lossy().into_owned();
            let path = dirent.path();
            let meta = fs::symlink_metadata(&path)?;
            let entry = if meta.file_type().is_symlink() {
                let target = fs::read_link(&path)?;
                TreeEntry::Symlink(target.to_string_lossy().into_owned().into_bytes())
            } else if meta.is_dir() {
                TreeEntry::Dir(DirectoryTree::from_path(&path)?)
            } else if is_executable(&meta) {
                TreeEntry::Executable(fs::read(&path)?)
            } else {
                TreeEntry::File(fs::read(&path)?)
            };
            tree.insert(name, entry)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        }
        Ok(tree)
    }

    /// Entries in git tree order: byte-wise, with directory names compared
    /// as if suffixed by `/`.
    fn git_sorted(&self) -> Vec<(&String, &TreeEntry)> {
        let mut sorted: Vec<_> = self.entries.iter().collect();
        sorted.sort_by(|(a, ea), (b, eb)| git_name_cmp(a, ea, b, eb));
        sorted
    }

    /// The raw git tree object payload (without the `tree <len>\0` header).
    pub fn tree_object(&self) -> Result<Vec<u8>, SwhidError> {
        let mut out = Vec::new();
        for (name, entry) in self.git_sorted() {
            check_entry_name(name)?;
            out.extend_from_slice(entry.mode().as_bytes());
            out.push(b' ');
            out.extend_from_slice(name.as_bytes());
            out.push(0);
            out.extend_from_slice(&entry.digest()?);
        }
        Ok(out)
    }

    pub(crate) fn digest(&self) -> Result<[u8; 20], SwhidError> {
        Ok(git_object_digest("tree", &self.tree_object()?))
    }
}

fn git_name_cmp(a: &str, ea: &TreeEntry, b: &str, eb: &TreeEntry) -> Ordering {
    let key = |name: &str, e: &TreeEntry| {
        let mut k = name.as_bytes().to_vec();
        if matches!(e, TreeEntry::Dir(_)) {
            k.push(b'/');
        }
        k
    };
    key(a, ea).cmp(&key(b, eb))
}

#[cfg(unix)]
fn is_executable(meta: &fs::Metadata) -> bool {
    use std::os::unix::fs::PermissionsExt;
    meta.permissions().mode() & 0o111 != 0
}

#[cfg(not(unix))]
fn is_executable(_meta: &fs::Metadata) -> bool {
    false
}
