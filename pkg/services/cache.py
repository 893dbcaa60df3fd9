import sqlite3
from pathlib import Path
from typing import Any, Dict, List, Optional

from config.logger import get_logger
from config.settings import settings
from services.offline import OfflineArtifact
from utils.helpers import get_content_hash

logger = get_logger(__name__)

CACHE_FORMAT_VERSION = 1


def offline_cache_key(params: dict[str, Any]) -> str:
    """Content hash of everything an offline build depends on."""
    return get_content_hash({**params, "format_version": CACHE_FORMAT_VERSION})


class ArtifactCache:
    """Offline artifacts as npz files, indexed by content hash in sqlite."""

    def __init__(self, cache_dir: Optional[str | Path] = None):
        self.cache_dir = Path(cache_dir) if cache_dir is not None else settings.cache_dir
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.db_path = self.cache_dir / "index.db"
        self.init_db()

    def init_db(self):
        """Initialize the index table"""
        with sqlite3.connect(self.db_path) as conn:
            conn.execute("""
                CREATE TABLE IF NOT EXISTS artifacts (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    key TEXT NOT NULL UNIQUE,
                    kind TEXT NOT NULL,
                    path TEXT NOT NULL,
                    created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP
                )
            """)
            conn.execute("""
                CREATE INDEX IF NOT EXISTS idx_created_at ON artifacts(created_at)
            """)
            conn.commit()

    def store(self, key: str, artifact: OfflineArtifact, kind: str = "offline") -> Path:
        """Write the artifact and record it under `key`"""
        path = artifact.save(self.cache_dir / f"{kind}_{key[:16]}.npz").resolve()
        with sqlite3.connect(self.db_path) as conn:
            conn.execute(
                """
                INSERT OR REPLACE INTO artifacts (key, kind, path)
                VALUES (?, ?, ?)
            """,
                (key, kind, str(path)),
            )
            conn.commit()
        logger.info(f"Cached {kind} artifact {key[:12]} at {path}")
        return path

    def lookup(self, key: str) -> Optional[Dict[str, Any]]:
        with sqlite3.connect(self.db_path) as conn:
            conn.row_factory = sqlite3.Row
            row = conn.execute(
                """
                SELECT id, key, kind, path, created_at
                FROM artifacts
                WHERE key = ?
            """,
                (key,),
            ).fetchone()
            return dict(row) if row else None

    def load(self, key: str) -> Optional[OfflineArtifact]:
        """Cached artifact for `key`, or None on a miss or a stale index entry"""
        entry = self.lookup(key)
        if entry is None:
            logger.info(f"Cache miss for {key[:12]}")
            return None
        path = Path(entry["path"])
        if not path.exists():
            logger.warning(f"Cache entry {key[:12]} points to missing file {path}")
            self.delete(key)
            return None
        logger.info(f"Cache hit for {key[:12]}")
        return OfflineArtifact.load(path)

    def entries(self, limit: int = 100) -> List[Dict[str, Any]]:
        with sqlite3.connect(self.db_path) as conn:
            conn.row_factory = sqlite3.Row
            cursor = conn.execute(
                """
                SELECT id, key, kind, path, created_at
                FROM artifacts
                ORDER BY created_at DESC
                LIMIT ?
            """,
                (limit,),
            )
            return [dict(row) for row in cursor.fetchall()]

    def delete(self, key: str) -> bool:
        with sqlite3.connect(self.db_path) as conn:
            cursor = conn.execute("DELETE FROM artifacts WHERE key = ?", (key,))
            conn.commit()
            return cursor.rowcount > 0
