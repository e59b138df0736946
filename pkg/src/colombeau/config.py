"""Line-oriented scenario files: ``[section]`` headers and ``key = value`` lines.

Comments start with ``#`` or ``;`` at the beginning of a line.  Errors carry
the line and column of the offending text.
"""

from __future__ import annotations

from dataclasses import dataclass, field


class ConfigError(ValueError):
    def __init__(self, message: str, line: int = 0, column: int = 0, source: str = "<config>"):
        self.line, self.column, self.source = line, column, source
        where = f"{source}:{line}:{column}: " if line else f"{source}: "
        super().__init__(where + message)


@dataclass
class Entry:
    value: str
    line: int
    column: int


@dataclass
class Section:
    name: str
    line: int
    entries: dict[str, Entry] = field(default_factory=dict)

    def get(self, key: str, default=None):
        e = self.entries.get(key)
        return e.value if e is not None else default

    def require(self, key: str, source: str) -> Entry:
        if key not in self.entries:
            raise ConfigError(f"section [{self.name}] is missing key {key!r}", self.line, 1, source)
        return self.entries[key]


@dataclass
class ConfigFile:
    source: str
    sections: list[Section]

    def section(self, name: str) -> Section | None:
        for s in self.sections:
            if s.name == name:
                return s
        return None

    def prefixed(self, prefix: str) -> list[Section]:
        return [s for s in self.sections if s.name.startswith(prefix)]


def parse_config(text: str, source: str = "<config>") -> ConfigFile:
    sections: list[Section] = []
    current: Section | None = None
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped[0] in "#;":
            continue
        indent = len(raw) - len(raw.lstrip())
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ConfigError("unterminated section header", lineno, indent + len(stripped), source)
            name = stripped[1:-1].strip()
            if not name:
                raise ConfigError("empty section name", lineno, indent + 2, source)
            if name in seen:
                raise ConfigError(f"duplicate section [{name}]", lineno, indent + 1, source)
            seen.add(name)
            current = Section(name, lineno)
            sections.append(current)
            continue
        if "=" not in stripped:
            raise ConfigError("expected 'key = value'", lineno, indent + 1, source)
        if current is None:
            raise ConfigError("key outside of any section", lineno, indent + 1, source)
        key, _, value = raw.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError("empty key", lineno, indent + 1, source)
        if key in current.entries:
            raise ConfigError(f"duplicate key {key!r}", lineno, indent + 1, source)
        col = len(raw) - len(raw.partition("=")[2].lstrip()) + 1
        current.entries[key] = Entry(value.strip(), lineno, col)
    return ConfigFile(source, sections)
