"""Loading of TOML configuration files into click defaults"""

from __future__ import annotations
from dataclasses import dataclass, field
from pathlib import Path
import re
import sys
import click

if sys.version_info >= (3, 11):
    from tomllib import TOMLDecodeError
    from tomllib import loads as toml_loads
else:
    from tomli import TOMLDecodeError
    from tomli import loads as toml_loads

#: Top-level table holding all option settings
OPTIONS_TABLE = "options"

HEADER_RX = re.compile(r'^\s*\[\s*([A-Za-z0-9_.\-" ]+?)\s*\]\s*(?:#.*)?$')
KEY_RX = re.compile(r'^\s*"?([A-Za-z0-9_\-]+)"?\s*=')


class ConfigError(click.ClickException):
    """Invalid configuration file or option value"""

    exit_code = 1


def _norm(name: str) -> str:
    return name.replace("-", "_")


@dataclass
class ConfigSource:
    """
    A parsed configuration file together with the line on which each table
    and key was written
    """

    path: Path
    data: dict
    lines: dict[tuple[tuple[str, ...], str | None], int] = field(
        default_factory=dict
    )

    @classmethod
    def read(cls, path: Path) -> ConfigSource:
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(
                f"{path}: could not read file: {e.strerror}"
            ) from None
        try:
            data = toml_loads(text)
        except TOMLDecodeError as e:
            # The message names the line and column.
            raise ConfigError(f"{path}: {e}") from None
        src = cls(path=path, data=data)
        table: tuple[str, ...] = ()
        for lineno, line in enumerate(text.splitlines(), start=1):
            if m := HEADER_RX.match(line):
                table = tuple(
                    _norm(part.strip().strip('"')) for part in m[1].split(".")
                )
                src.lines.setdefault((table, None), lineno)
            elif m := KEY_RX.match(line):
                src.lines.setdefault((table, _norm(m[1])), lineno)
        return src

    def where(self, table: tuple[str, ...], key: str | None = None) -> str:
        """``PATH:LINE`` for a table or key, falling back to its table"""
        norm = tuple(map(_norm, table))
        lineno = self.lines.get((norm, _norm(key) if key else None))
        if lineno is None:
            lineno = self.lines.get((norm, None))
        if lineno is None:
            return str(self.path)
        return f"{self.path}:{lineno}"


def configure(
    ctx: click.Context, _param: click.Parameter, filename: Path | None
) -> None:
    """
    Callback for the ``--config`` option: check the file against the
    command tree and install its settings as the context's default map
    """
    if filename is None:
        return
    src = ConfigSource.read(filename)
    for key in src.data:
        if key != OPTIONS_TABLE:
            raise ConfigError(f"{src.where((key,))}: unknown table {key!r}")
    opts = src.data.get(OPTIONS_TABLE, {})
    if not isinstance(opts, dict):
        raise ConfigError(
            f"{src.where((), OPTIONS_TABLE)}: {OPTIONS_TABLE!r} must be a table"
        )
    from .__main__ import main
    from .clack import ConfigurableGroup

    assert isinstance(main, ConfigurableGroup)
    ctx.default_map = main.process_config(opts, src, (OPTIONS_TABLE,))
