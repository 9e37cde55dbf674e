from __future__ import annotations
from collections.abc import Sequence
import click
from ..analytic import (
    choir_fraction_probability,
    collision_probability,
    collision_probability_approx,
    multiuser_capacity,
    processing_gain_db,
    rate_model,
    simulate_collision_frequency,
    tolerated_freq_mismatch,
    tolerated_timing_mismatch,
)
from ..clack import SEED_ENVVAR, ConfigurableCommand, simulation_errors
from ..css import MAX_SF, MIN_SF, ChirpConfig
from ..util import db_to_power, trial_rng


def render_table(
    title: str, header: Sequence[str], rows: Sequence[Sequence[float]], digits: int
) -> str:
    cells = [
        [f"{v:.{digits}g}" if isinstance(v, float) else str(v) for v in row]
        for row in rows
    ]
    widths = [
        max(len(h), *(len(r[i]) for r in cells)) for i, h in enumerate(header)
    ]
    lines = [title, "  ".join(h.rjust(w) for h, w in zip(header, widths))]
    lines.extend("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells)
    return "\n".join(lines)


@click.command(cls=ConfigurableCommand)
@click.option(
    "--sf",
    type=click.IntRange(MIN_SF, MAX_SF),
    default=9,
    show_default=True,
    help="Spreading factor",
)
@click.option(
    "--bw",
    type=click.FloatRange(min=0, min_open=True),
    default=500_000.0,
    show_default=True,
    help="Chirp bandwidth in Hz",
)
@click.option("--collision", is_flag=True, help="Show same-shift collision odds")
@click.option("--choir", is_flag=True, help="Show distinct peak-fraction odds")
@click.option("--rates", is_flag=True, help="Show bit rates for every spreading factor")
@click.option("--capacity", is_flag=True, help="Show multi-user Shannon capacity")
@click.option(
    "-n",
    "--n",
    "ns",
    type=click.IntRange(min=1),
    multiple=True,
    default=list(range(1, 11)),
    show_default=True,
    help="Number of transmitters",
)
@click.option(
    "--snr",
    type=float,
    default=-10.0,
    show_default=True,
    help="Per-user SNR for the capacity table, in dB",
)
@click.option(
    "--trials",
    type=click.IntRange(min=0),
    default=0,
    show_default=True,
    help="Monte-Carlo trials checking the collision odds (0 to skip)",
)
@click.option(
    "--seed",
    type=click.IntRange(min=0),
    default=0,
    show_default=True,
    envvar=SEED_ENVVAR,
    help="Random seed for the Monte-Carlo check",
)
@click.option(
    "--digits",
    type=click.IntRange(min=1),
    default=4,
    show_default=True,
    help="Significant digits shown",
)
@simulation_errors
def cli(
    sf: int,
    bw: float,
    collision: bool,
    choir: bool,
    rates: bool,
    capacity: bool,
    ns: tuple[int, ...],
    snr: float,
    trials: int,
    seed: int,
    digits: int,
) -> None:
    """Print closed-form tables of rates, collisions and capacity"""
    if not (collision or choir or rates or capacity):
        collision = choir = rates = capacity = True
    tables = []
    if collision:
        header = ["n", "exact", "approx"]
        rows: list[list] = []
        for n in ns:
            row = [
                n,
                collision_probability(n, sf),
                collision_probability_approx(n, sf),
            ]
            if trials:
                rng = trial_rng(seed, n)
                row.append(simulate_collision_frequency(n, sf, trials, rng))
            rows.append(row)
        if trials:
            header.append("simulated")
        tables.append(
            render_table(f"Shift collision probability, SF{sf}", header, rows, digits)
        )
    if choir:
        tables.append(
            render_table(
                "Probability of distinct peak fractions",
                ["n", "probability"],
                [[n, choir_fraction_probability(n)] for n in ns],
                digits,
            )
        )
    if rates:
        rows = []
        for s in range(MIN_SF, MAX_SF + 1):
            cfg = ChirpConfig(sf=s, bw=bw)
            model = rate_model(cfg)
            rows.append(
                [
                    s,
                    model.lora_bitrate,
                    model.device_bitrate,
                    model.aggregate_rate,
                    model.gain,
                    processing_gain_db(s),
                    tolerated_timing_mismatch(cfg),
                    tolerated_freq_mismatch(cfg),
                ]
            )
        tables.append(
            render_table(
                f"Bit rates at {bw:g} Hz",
                [
                    "sf",
                    "lora_bps",
                    "device_bps",
                    "aggregate_bps",
                    "gain",
                    "proc_gain_db",
                    "max_dt_s",
                    "max_df_hz",
                ],
                rows,
                digits,
            )
        )
    if capacity:
        snr_linear = db_to_power(snr)
        rows = []
        for n in ns:
            cap = multiuser_capacity(n, snr_linear, bw)
            rows.append([n, cap.exact, cap.low_snr_approx])
        tables.append(
            render_table(
                f"Capacity at {snr:g} dB per user, {bw:g} Hz",
                ["n", "exact_bps", "low_snr_bps"],
                rows,
                digits,
            )
        )
    click.echo("\n\n".join(tables))
