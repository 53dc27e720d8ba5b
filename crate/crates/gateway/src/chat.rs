//! Chat sessions: every turn goes to all targeted drivers, the user picks
//! one candidate, and only picked answers become conversation history.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use multimind_core::driver::{DriverId, Message};
use multimind_core::manager::FanoutOutcome;
use serde::{Deserialize, Serialize};
use tracing::warn;

/// Most recent turns sent to drivers as history.
pub const MAX_HISTORY_TURNS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub user_text: String,
    pub candidates: FanoutOutcome,
    #[serde(default)]
    pub selected_driver: Option<DriverId>,
    /// Unix time in milliseconds.
    pub timestamp: u64,
}

impl ChatTurn {
    pub fn selected_content(&self) -> Option<&str> {
        let id = self.selected_driver.as_ref()?;
        self.candidates.results.get(id)?.response().map(|r| r.content.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatSession {
    pub session_id: String,
    pub created_at: u64,
    pub turns: Vec<ChatTurn>,
}

impl ChatSession {
    pub fn new(session_id: String) -> Self {
        Self {
            session_id,
            created_at: now_ms(),
            turns: Vec::new(),
        }
    }

    /// Messages preceding the next user turn: user texts and selected
    /// answers of the most recent turns.
    pub fn history(&self) -> Vec<Message> {
        let skip = self.turns.len().saturating_sub(MAX_HISTORY_TURNS);
        let mut messages = Vec::new();
        for turn in &self.turns[skip..] {
            messages.push(Message::user(turn.user_text.clone()));
            if let Some(content) = turn.selected_content() {
                messages.push(Message::assistant(content));
            }
        }
        messages
    }

    pub fn select(&mut self, turn_index: usize, driver: &DriverId) -> Result<(), SelectError> {
        let turns = self.turns.len();
        let turn = self
            .turns
            .get_mut(turn_index)
            .ok_or(SelectError::UnknownTurn { turn_index, turns })?;
        match turn.candidates.results.get(driver) {
            None => Err(SelectError::NotACandidate(driver.clone())),
            Some(r) if r.response().is_none() => Err(SelectError::ErroredCandidate(driver.clone())),
            Some(_) => {
                turn.selected_driver = Some(driver.clone());
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SelectError {
    #[error("turn {turn_index} does not exist (session has {turns} turns)")]
    UnknownTurn { turn_index: usize, turns: usize },
    #[error("driver {0} has no candidate in this turn")]
    NotACandidate(DriverId),
    #[error("candidate from {0} is an error and cannot be selected")]
    ErroredCandidate(DriverId),
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

pub fn new_session_id() -> String {
    uuid::Uuid::new_v4().simple().to_string()
}

/// Line-delimited JSON record of transcript changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum JournalRecord {
    SessionCreated {
        session_id: String,
        created_at: u64,
    },
    Turn {
        session_id: String,
        turn: ChatTurn,
    },
    Selected {
        session_id: String,
        turn_index: usize,
        driver_id: DriverId,
    },
}

/// Append-only journal. Write failures are logged, never surfaced: the
/// journal is a recovery aid, not the source of truth.
pub struct Journal {
    path: PathBuf,
    file: Mutex<File>,
}

impl Journal {
    pub fn open(path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            path: path.to_owned(),
            file: Mutex::new(file),
        })
    }

    pub fn append(&self, record: &JournalRecord) {
        let mut line = serde_json::to_vec(record).expect("journal records serialize");
        line.push(b'\n');
        let mut file = self.file.lock().expect("journal lock poisoned");
        if let Err(e) = file.write_all(&line).and_then(|_| file.flush()) {
            warn!(path = %self.path.display(), error = %e, "journal write failed");
        }
    }

    /// Rebuilds sessions from a journal file. Unreadable lines are skipped.
    pub fn replay(path: &Path) -> std::io::Result<Vec<ChatSession>> {
        let file = match File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e),
        };
        let mut order = Vec::new();
        let mut sessions: HashMap<String, ChatSession> = HashMap::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: JournalRecord = match serde_json::from_str(&line) {
                Ok(r) => r,
                Err(e) => {
                    warn!(line = n + 1, error = %e, "skipping unreadable journal record");
                    continue;
                }
            };
            match record {
                JournalRecord::SessionCreated { session_id, created_at } => {
                    order.push(session_id.clone());
                    sessions.insert(
                        session_id.clone(),
                        ChatSession {
                            session_id,
                            created_at,
                            turns: Vec::new(),
                        },
                    );
                }
                JournalRecord::Turn { session_id, turn } => {
                    if let Some(s) = sessions.get_mut(&session_id) {
                        s.turns.push(turn);
                    }
                }
                JournalRecord::Selected {
                    session_id,
                    turn_index,
                    driver_id,
                } => {
                    if let Some(s) = sessions.get_mut(&session_id) {
                        let _ = s.select(turn_index, &driver_id);
                    }
                }
            }
        }
        Ok(order.into_iter().filter_map(|id| sessions.remove(&id)).collect())
    }
}

/// In-memory session store. Each session has its own async lock so its
/// turns are serialized while distinct sessions proceed independently.
#[derive(Default)]
pub struct SessionStore {
    sessions: Mutex<HashMap<String, Arc<tokio::sync::Mutex<ChatSession>>>>,
}

impl SessionStore {
    pub fn insert(&self, session: ChatSession) {
        self.sessions
            .lock()
            .expect("session map poisoned")
            .insert(session.session_id.clone(), Arc::new(tokio::sync::Mutex::new(session)));
    }

    pub fn get(&self, id: &str) -> Option<Arc<tokio::sync::Mutex<ChatSession>>> {
        self.sessions.lock().expect("session map poisoned").get(id).cloned()
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().expect("session map poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
