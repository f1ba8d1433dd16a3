"""Command-line harness: run experiment plans, verify the theorem suites,
replay and export individual runs, serve the election service, and drive a
running service as a thin HTTP client."""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from .experiments import ExperimentPlan, load_plan, replay_run, run_plan
from .presets import PRESETS, verify_theorems


@click.group()
def main():
    """Iterative local voting: simulation harness and election service."""


@main.command()
@click.argument("plan_file", type=click.Path(exists=True))
@click.option("--out-dir", type=click.Path(), default="ilv-out", show_default=True)
@click.option("--seed", type=int, default=None,
              help="Override the plan's population seed.")
@click.option("--workers", type=int, default=os.cpu_count(), show_default="CPU count")
@click.option("--format", "fmt", type=click.Choice(["table", "objects"]),
              default="objects", show_default=True,
              help="Trajectory file format to write alongside the report.")
def run(plan_file, out_dir, seed, workers, fmt):
    """Execute an experiment plan and write report + trajectories."""
    plan = load_plan(plan_file)
    if seed is not None:
        pop = plan.population.from_dict({**plan.population.to_dict(), "seed": seed})
        plan = ExperimentPlan.from_dict({**plan.to_dict(), "population": pop.to_dict()})
    report = run_plan(plan, workers=workers)
    out = Path(out_dir)
    traj_dir = out / "trajectories"
    traj_dir.mkdir(parents=True, exist_ok=True)
    for run_id, traj in report.trajectories.items():
        if fmt == "objects":
            traj.write_ndjson(traj_dir / f"{run_id}.ndjson")
        else:
            traj.write_table(traj_dir / f"{run_id}.tsv")
    report.write(out / "report.json")
    click.echo(f"report: {out / 'report.json'}")
    for summary in report.mechanism_summaries:
        click.echo(f"  {summary['mechanism']}: dispersion="
                   f"{summary['dispersion_linf']} failed={summary['failed']}")
    failed = [r for r in report.runs if r["status"] == "failed"]
    if failed:
        click.echo(f"  {len(failed)} run(s) failed", err=True)


@main.command()
@click.argument("preset", type=click.Choice(PRESETS))
@click.option("--out-dir", type=click.Path(), default=None,
              help="Also write the verdict table as JSON.")
@click.option("--workers", type=int, default=1, show_default=True)
def verify(preset, out_dir, workers):
    """Run a named verification suite and print pass/fail per criterion."""
    result = verify_theorems(preset, workers=workers)
    click.echo(result.format())
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / f"verify-{preset}.json", "w") as fh:
            json.dump(result.to_dict(), fh, indent=2, sort_keys=True)
    sys.exit(0 if result.passed else 1)


def _load_report(report_path) -> dict:
    with open(report_path) as fh:
        return json.load(fh)


@main.command()
@click.argument("run_id")
@click.option("--report", "report_path", type=click.Path(exists=True),
              default="ilv-out/report.json", show_default=True)
def replay(run_id, report_path):
    """Re-execute one recorded run and check it reproduces the report."""
    report = _load_report(report_path)
    traj = replay_run(report, run_id)
    rec = next(r for r in report["runs"] if r["run_id"] == run_id)
    recorded = np.asarray(rec["terminal"])
    match = (traj.terminal_status == rec["status"]
             and traj.updates == rec["updates"]
             and np.array_equal(traj.terminal, recorded))
    click.echo(f"replayed {run_id}: updates={traj.updates} "
               f"terminal={traj.terminal.tolist()}")
    click.echo("replay matches recorded run" if match
               else "MISMATCH against recorded run")
    sys.exit(0 if match else 1)


@main.command()
@click.argument("run_id")
@click.option("--report", "report_path", type=click.Path(exists=True),
              default="ilv-out/report.json", show_default=True)
@click.option("--format", "fmt", type=click.Choice(["table", "objects"]),
              default="objects", show_default=True)
@click.option("--output", type=click.Path(), default="-",
              help="Output file; '-' for stdout.")
def export(run_id, report_path, fmt, output):
    """Re-derive one run's trajectory and emit it as a table or objects."""
    report = _load_report(report_path)
    traj = replay_run(report, run_id)
    import tempfile
    with tempfile.NamedTemporaryFile("r", suffix=".txt", delete=False) as tmp:
        path = tmp.name
    try:
        if fmt == "objects":
            traj.write_ndjson(path)
        else:
            traj.write_table(path)
        text = Path(path).read_text()
    finally:
        os.unlink(path)
    if output == "-":
        click.echo(text, nl=False)
    else:
        Path(output).write_text(text)
        click.echo(f"wrote {output}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--data-dir", type=click.Path(), default="ilv-data", show_default=True)
def serve(host, port, data_dir):
    """Run the live election service."""
    import uvicorn

    from .service import create_app
    uvicorn.run(create_app(data_dir=data_dir), host=host, port=port)


@main.group()
@click.option("--url", default="http://127.0.0.1:8000", show_default=True,
              help="Base URL of a running election service.")
@click.pass_context
def election(ctx, url):
    """Administer a running election service over HTTP."""
    ctx.obj = url


def _client(url):
    import httpx
    return httpx.Client(base_url=url, timeout=30.0)


@election.command("create")
@click.argument("config_file", type=click.Path(exists=True))
@click.pass_obj
def election_create(url, config_file):
    """Create an instance from a JSON config file (CreateInstanceRequest)."""
    body = json.loads(Path(config_file).read_text())
    with _client(url) as c:
        resp = c.post("/instances", json=body)
        resp.raise_for_status()
        click.echo(resp.json()["instance_id"])


@election.command("state")
@click.argument("instance_id")
@click.pass_obj
def election_state(url, instance_id):
    with _client(url) as c:
        resp = c.get(f"/instances/{instance_id}")
        resp.raise_for_status()
        click.echo(json.dumps(resp.json(), indent=2, sort_keys=True))


@election.command("export")
@click.argument("instance_id")
@click.option("--output", type=click.Path(), default="-")
@click.pass_obj
def election_export(url, instance_id, output):
    with _client(url) as c:
        resp = c.get(f"/instances/{instance_id}/export")
        resp.raise_for_status()
        text = json.dumps(resp.json(), indent=2, sort_keys=True)
    if output == "-":
        click.echo(text)
    else:
        Path(output).write_text(text)
        click.echo(f"wrote {output}")


@election.command("close")
@click.argument("instance_id")
@click.pass_obj
def election_close(url, instance_id):
    with _client(url) as c:
        resp = c.post(f"/instances/{instance_id}/close")
        resp.raise_for_status()
        click.echo(json.dumps(resp.json()))


if __name__ == "__main__":
    main()
