from __future__ import annotations
import json
from pathlib import Path
import click
from ..channel import JitterSpec
from ..clack import (
    ConfigurableCommand,
    JitterType,
    chirp_config,
    chirp_options,
    emit_records,
    run_options,
    simulation_errors,
)
from ..config import ConfigError
from ..network import (
    DEFAULT_LORA_RATES,
    DEFAULT_SNR_RANGE,
    Scheme,
    parse_rate_table,
    run_network,
)
from ..records import ExperimentRecord


def read_snr_file(path: Path) -> dict[int, float]:
    """Read device SNRs from a JSON array, or an object keyed by device ID"""
    try:
        with path.open(encoding="utf-8") as fp:
            data = json.load(fp)
    except (OSError, ValueError) as e:
        raise ConfigError(f"{path}: could not read SNRs: {e}") from None
    if isinstance(data, list):
        items = list(enumerate(data))
    elif isinstance(data, dict):
        try:
            items = [(int(k), v) for k, v in data.items()]
        except ValueError:
            raise ConfigError(f"{path}: device IDs must be integers") from None
    else:
        raise ConfigError(f"{path}: expected an array or object of SNRs")
    if not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for _, v in items
    ):
        raise ConfigError(f"{path}: SNRs must be numbers")
    return {k: float(v) for k, v in items}


@click.command(cls=ConfigurableCommand)
@chirp_options
@click.option(
    "-n",
    "--n-devices",
    "n_devices",
    type=click.IntRange(min=1),
    multiple=True,
    default=[1, 16, 64, 128, 256],
    show_default=True,
    help="Network size",
)
@click.option(
    "-s",
    "--scheme",
    "schemes",
    type=click.Choice(Scheme.values()),
    multiple=True,
    help="Medium access scheme to evaluate  [default: all]",
)
@click.option(
    "--rounds",
    type=click.IntRange(min=1),
    default=5,
    show_default=True,
    help="Concurrent rounds simulated per network size",
)
@click.option(
    "--jitter",
    type=JitterType(),
    default="uniform:0:2e-06",
    show_default=True,
    help="Per-packet timing offset: fixed:S, uniform:LOW:HIGH or gaussian:SIGMA",
)
@click.option(
    "--snr-range",
    type=(float, float),
    default=DEFAULT_SNR_RANGE,
    show_default=True,
    help="Range from which device SNRs are drawn uniformly, in dB",
)
@click.option(
    "--snr-file",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help="JSON file giving each device's SNR in dB",
)
@click.option(
    "--lora-rates",
    metavar="SNR:BPS:SF,...",
    help="LoRa rate ladder used by the ideal-rate baseline",
)
@click.option(
    "--blind-start/--known-start",
    default=False,
    show_default=True,
    help="Find each packet start in the capture instead of using the query timing",
)
@run_options
@click.pass_context
@simulation_errors
def cli(
    ctx: click.Context,
    sf: int,
    bw: float,
    skip: int,
    pad_factor: int,
    n_devices: tuple[int, ...],
    schemes: tuple[str, ...],
    rounds: int,
    jitter: JitterSpec,
    snr_range: tuple[float, float],
    snr_file: Path | None,
    lora_rates: str | None,
    blind_start: bool,
    seed: int,
    output: Path | None,
    fmt: str | None,
    jobs: int,
) -> None:
    """Throughput and latency of NetScatter against sequential LoRa"""
    if lora_rates is None:
        rates = DEFAULT_LORA_RATES
    else:
        try:
            rates = parse_rate_table(lora_rates)
        except ValueError as e:
            raise ConfigError(f"--lora-rates: {e}") from None
    snr_map = read_snr_file(snr_file) if snr_file is not None else None
    cfg = chirp_config(sf, bw, pad_factor)
    records: list[ExperimentRecord] = []
    for scheme in schemes or Scheme.values():
        records.extend(
            run_network(
                n_devices,
                Scheme(scheme),
                cfg,
                snr_map=snr_map,
                seed=seed,
                skip=skip,
                n_rounds=rounds,
                jitter=jitter,
                lora_rates=rates,
                snr_range=snr_range,
                blind_start=blind_start,
                jobs=jobs,
            )
        )
    emit_records(records, ctx, seed, output, fmt)
