from __future__ import annotations
from collections.abc import Callable, Sequence
from enum import Enum
from functools import wraps
import logging
from pathlib import Path
import sys
from typing import IO, Any
import click
from .channel import JitterSpec
from .config import ConfigError, ConfigSource
from .css import DEFAULT_PAD_FACTOR, ChirpConfig
from .records import ExperimentRecord, RunConfig, write_csv, write_json

log = logging.getLogger(__name__)

#: Environment variable supplying ``--seed`` when it is not given on the
#: command line
SEED_ENVVAR = "NETSCATTER_SEED"


class SimulationError(click.ClickException):
    """A simulation could not be carried out with the given settings"""

    exit_code = 2


class ConfigurableCommand(click.Command):
    def __init__(
        self,
        allow_config: list[str] | None = None,
        disallow_config: list[str] | None = None,
        **kwargs: Any,
    ) -> None:
        super().__init__(**kwargs)
        self.allow_config = allow_config
        self.disallow_config = disallow_config

    def is_configurable(self, paramname: str) -> bool:
        return (self.allow_config is None or paramname in self.allow_config) and (
            self.disallow_config is None or paramname not in self.disallow_config
        )

    def make_context(self, *args: Any, **kwargs: Any) -> click.Context:
        try:
            return super().make_context(*args, **kwargs)
        except click.BadParameter as e:
            raise ConfigError(e.format_message()) from e

    def process_config(
        self, cfg: dict[str, Any], src: ConfigSource, table: tuple[str, ...]
    ) -> dict[str, Any]:
        """
        Validate the settings in ``cfg`` against this command's options and
        return them as a click default map.  Keys may be spelled as an
        option's long name or its parameter name.  Unknown keys and values
        the option's type rejects raise `ConfigError`.
        """
        out_cfg: dict[str, Any] = {}
        params: dict[str, click.Option] = {}
        for p in self.params:
            if isinstance(p, click.Option) and p.name is not None:
                params[p.name] = p
                for opt in p.opts:
                    if opt.startswith("--"):
                        params.setdefault(opt[2:].replace("-", "_"), p)
        for k, v in cfg.items():
            p = params.get(k.replace("-", "_"))
            if p is None or p.name is None or not self.is_configurable(p.name):
                raise ConfigError(f"{src.where(table, k)}: unknown option {k!r}")
            if p.name in out_cfg:
                raise ConfigError(f"{src.where(table, k)}: {p.name!r} set twice")
            out_cfg[p.name] = check_value(p, v, src.where(table, k))
        return out_cfg


def check_value(p: click.Option, value: Any, where: str) -> Any:
    if p.multiple or p.nargs != 1:
        if not isinstance(value, list):
            raise ConfigError(f"{where}: {p.name!r} must be an array")
        if p.nargs > 1 and len(value) != p.nargs:
            raise ConfigError(f"{where}: {p.name!r} takes exactly {p.nargs} values")
        items = value
    else:
        items = [value]
    for v in items:
        if isinstance(v, (dict, list)):
            raise ConfigError(f"{where}: invalid value for {p.name!r}: {v!r}")
        try:
            p.type.convert(v, p, None)
        except click.BadParameter as e:
            raise ConfigError(
                f"{where}: invalid value for {p.name!r}: {e.message}"
            ) from None
    return value


class ConfigurableGroup(ConfigurableCommand, click.Group):
    def process_config(
        self, cfg: dict[str, Any], src: ConfigSource, table: tuple[str, ...]
    ) -> dict[str, Any]:
        own = {k: v for k, v in cfg.items() if k not in self.commands}
        out_cfg = super().process_config(own, src, table)
        for cmdname, cmdobj in self.commands.items():
            if cmdname not in cfg:
                continue
            c = cfg[cmdname]
            if not isinstance(c, dict):
                raise ConfigError(
                    f"{src.where(table, cmdname)}: settings for {cmdname!r} must"
                    " be a table"
                )
            if isinstance(cmdobj, ConfigurableCommand):
                out_cfg[cmdname] = cmdobj.process_config(c, src, (*table, cmdname))
            elif c:
                raise ConfigError(
                    f"{src.where((*table, cmdname))}: {cmdname!r} takes no settings"
                )
        return out_cfg


class JitterType(click.ParamType):
    name = "jitter"

    def convert(
        self, value: Any, param: click.Parameter | None, ctx: click.Context | None
    ) -> JitterSpec:
        if isinstance(value, JitterSpec):
            return value
        try:
            return JitterSpec.parse(str(value))
        except ValueError as e:
            self.fail(str(e), param, ctx)


def simulation_errors(func: Callable) -> Callable:
    """Report errors raised while simulating as `SimulationError`"""

    @wraps(func)
    def wrapped(*args: Any, **kwargs: Any) -> Any:
        try:
            return func(*args, **kwargs)
        except ValueError as e:
            log.debug("Simulation failed", exc_info=True)
            raise SimulationError(str(e)) from e

    return wrapped


def chirp_options(func: Callable) -> Callable:
    for opt in reversed(
        [
            click.option(
                "--sf",
                type=click.IntRange(6, 12),
                default=9,
                show_default=True,
                help="Spreading factor",
            ),
            click.option(
                "--bw",
                type=click.FloatRange(min=0, min_open=True),
                default=500_000.0,
                show_default=True,
                help="Chirp bandwidth in Hz",
            ),
            click.option(
                "--skip",
                type=click.IntRange(min=1),
                default=2,
                show_default=True,
                help="Spacing between assigned cyclic shifts, in bins",
            ),
            click.option(
                "--pad-factor",
                type=click.IntRange(min=1),
                default=DEFAULT_PAD_FACTOR,
                show_default=True,
                help="Zero-padding multiple of the receiver FFT",
            ),
        ]
    ):
        func = opt(func)
    return func


def run_options(func: Callable) -> Callable:
    for opt in reversed(
        [
            click.option(
                "--seed",
                type=click.IntRange(min=0),
                default=0,
                show_default=True,
                envvar=SEED_ENVVAR,
                show_envvar=True,
                help="Master random seed",
            ),
            click.option(
                "-o",
                "--output",
                type=click.Path(dir_okay=False, writable=True, path_type=Path),
                help="Write results to this file instead of standard output",
            ),
            click.option(
                "--format",
                "fmt",
                type=click.Choice(["csv", "json"]),
                help="Output format  [default: by output file extension, else csv]",
            ),
            click.option(
                "-J",
                "--jobs",
                type=click.IntRange(min=1),
                default=1,
                show_default=True,
                help="Number of worker processes",
            ),
        ]
    ):
        func = opt(func)
    return func


def chirp_config(sf: int, bw: float, pad_factor: int) -> ChirpConfig:
    try:
        return ChirpConfig(sf=sf, bw=bw, pad_factor=pad_factor)
    except ValueError as e:
        raise ConfigError(str(e)) from None


def _plain(value: Any) -> Any:
    if isinstance(value, Enum):
        return value.value
    elif isinstance(value, (JitterSpec, Path)):
        return str(value)
    elif isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    elif isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    else:
        return value


def output_format(output: Path | None, fmt: str | None) -> str:
    if fmt is not None:
        return fmt
    elif output is not None and output.suffix.lower() == ".json":
        return "json"
    else:
        return "csv"


def emit_records(
    records: Sequence[ExperimentRecord],
    ctx: click.Context,
    seed: int,
    output: Path | None,
    fmt: str | None,
) -> None:
    """Write ``records`` for the running command as CSV or JSON"""
    run = RunConfig(
        experiment=ctx.info_name or ctx.command.name or "",
        seed=seed,
        parameters={
            k: _plain(v)
            for k, v in ctx.params.items()
            if k not in ("output", "fmt", "jobs")
        },
        output_path=output,
    )
    fp: IO[str]
    if output is None:
        fp = sys.stdout
    else:
        fp = output.open("w", encoding="utf-8", newline="")
    try:
        if output_format(output, fmt) == "json":
            write_json(records, run, fp)
        else:
            write_csv(records, fp)
    finally:
        if output is not None:
            fp.close()
    if output is not None:
        log.info("Wrote %d records to %s", len(records), output)
