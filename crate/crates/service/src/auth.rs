//! Users, roles and the permission matrix.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Technician,
    Scientist,
    Manager,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Technician, Role::Scientist, Role::Manager];

    pub fn name(self) -> &'static str {
        match self {
            Role::Technician => "technician",
            Role::Scientist => "scientist",
            Role::Manager => "manager",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    ViewExperiments,
    ClaimRecords,
    SubmitResults,
    CreateExperiments,
    ControlScheduler,
    QueryPredictions,
    ExportData,
    ManageUsers,
    DeleteExperiments,
}

impl Action {
    pub const ALL: [Action; 9] = [
        Action::ViewExperiments,
        Action::ClaimRecords,
        Action::SubmitResults,
        Action::CreateExperiments,
        Action::ControlScheduler,
        Action::QueryPredictions,
        Action::ExportData,
        Action::ManageUsers,
        Action::DeleteExperiments,
    ];

    /// Least role allowed to perform the action by default.
    pub fn default_role(self) -> Role {
        match self {
            Action::ViewExperiments | Action::ClaimRecords | Action::SubmitResults => Role::Technician,
            Action::CreateExperiments | Action::ControlScheduler | Action::QueryPredictions | Action::ExportData => {
                Role::Scientist
            }
            Action::ManageUsers | Action::DeleteExperiments => Role::Manager,
        }
    }
}

/// Minimum role per action. Thresholds keep the role sets nested.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Permissions(BTreeMap<Action, Role>);

impl Default for Permissions {
    fn default() -> Self {
        Self(Action::ALL.into_iter().map(|a| (a, a.default_role())).collect())
    }
}

impl Permissions {
    /// Defaults with some thresholds replaced.
    pub fn with_overrides(overrides: &BTreeMap<Action, Role>) -> Self {
        let mut p = Self::default();
        p.0.extend(overrides.iter().map(|(a, r)| (*a, *r)));
        p
    }

    pub fn allows(&self, role: Role, action: Action) -> bool {
        role >= self.0.get(&action).copied().unwrap_or(Role::Manager)
    }

    pub fn actions_for(&self, role: Role) -> Vec<Action> {
        Action::ALL.into_iter().filter(|a| self.allows(role, *a)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserAccount {
    pub username: String,
    pub role: Role,
    pub token: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsersFile {
    #[serde(default)]
    pub users: Vec<UserAccount>,
    /// Per-action minimum role overrides.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub permissions: BTreeMap<Action, Role>,
}

#[derive(Debug, Error)]
pub enum UserError {
    #[error("user `{0}` already exists")]
    Duplicate(String),
    #[error("invalid username `{0}`")]
    InvalidName(String),
    #[error("cannot read users file: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse users file: {0}")]
    Parse(String),
}

/// Accounts, optionally persisted to a TOML file.
#[derive(Debug, Clone, Default)]
pub struct UserDb {
    path: Option<PathBuf>,
    file: UsersFile,
    permissions: Permissions,
}

pub fn new_token() -> String {
    let bytes: [u8; 24] = rand::rng().random();
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl UserDb {
    pub fn in_memory(users: Vec<UserAccount>) -> Result<Self, UserError> {
        Self::from_file(
            None,
            UsersFile {
                users,
                permissions: BTreeMap::new(),
            },
        )
    }

    fn from_file(path: Option<PathBuf>, file: UsersFile) -> Result<Self, UserError> {
        let mut seen = std::collections::BTreeSet::new();
        for u in &file.users {
            if !seen.insert(u.username.as_str()) {
                return Err(UserError::Duplicate(u.username.clone()));
            }
        }
        Ok(Self {
            permissions: Permissions::with_overrides(&file.permissions),
            path,
            file,
        })
    }

    /// Loads a users file; a missing file starts empty and is created on the
    /// first added user.
    pub fn load(path: &Path) -> Result<Self, UserError> {
        let file = match fs::read_to_string(path) {
            Ok(text) => toml::from_str(&text).map_err(|e| UserError::Parse(e.to_string()))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => UsersFile::default(),
            Err(e) => return Err(e.into()),
        };
        Self::from_file(Some(path.to_path_buf()), file)
    }

    pub fn permissions(&self) -> &Permissions {
        &self.permissions
    }

    pub fn users(&self) -> &[UserAccount] {
        &self.file.users
    }

    pub fn authenticate(&self, token: &str) -> Option<&UserAccount> {
        self.file.users.iter().find(|u| !u.token.is_empty() && u.token == token)
    }

    /// Adds a user with a fresh token and saves the file.
    pub fn add(&mut self, username: &str, role: Role) -> Result<UserAccount, UserError> {
        let ok = !username.is_empty()
            && username.chars().all(|c| c.is_ascii_alphanumeric() || "_-.@".contains(c));
        if !ok {
            return Err(UserError::InvalidName(username.to_string()));
        }
        if self.file.users.iter().any(|u| u.username == username) {
            return Err(UserError::Duplicate(username.to_string()));
        }
        let account = UserAccount {
            username: username.to_string(),
            role,
            token: new_token(),
        };
        self.file.users.push(account.clone());
        if let Err(e) = self.save() {
            self.file.users.pop();
            return Err(e);
        }
        Ok(account)
    }

    fn save(&self) -> Result<(), UserError> {
        if let Some(path) = &self.path {
            let text = toml::to_string(&self.file).map_err(|e| UserError::Parse(e.to_string()))?;
            fs::write(path, text)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn role_sets_are_nested() {
        let p = Permissions::default();
        let t = p.actions_for(Role::Technician);
        let s = p.actions_for(Role::Scientist);
        let m = p.actions_for(Role::Manager);
        assert!(t.iter().all(|a| s.contains(a)));
        assert!(s.iter().all(|a| m.contains(a)));
        assert_eq!(t, vec![Action::ViewExperiments, Action::ClaimRecords, Action::SubmitResults]);
        assert_eq!(m.len(), Action::ALL.len());
    }

    #[test]
    fn users_persist_and_stay_unique() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("users.toml");
        let mut db = UserDb::load(&path).unwrap();
        let a = db.add("ana", Role::Manager).unwrap();
        assert!(matches!(db.add("ana", Role::Technician), Err(UserError::Duplicate(_))));
        let again = UserDb::load(&path).unwrap();
        assert_eq!(again.authenticate(&a.token).unwrap().username, "ana");
        assert!(again.authenticate("nope").is_none());
    }
}
