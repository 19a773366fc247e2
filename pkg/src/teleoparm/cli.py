"""Headless entry points: run trials, replay logs, serve the live control loop."""
from __future__ import annotations

import asyncio
import contextlib
import os
import signal
import sys
from pathlib import Path

import click

from .metrics import (
    DemoLog,
    SchemaMismatch,
    aggregate,
    format_summary,
    read_log,
    summary_csv,
    write_log,
)
from .runner import ReplayDivergence, ScriptedDriver, replay_trial, result_of, run_trial
from .scenario import ScenarioError, load_scenario


def fail(code: str, text: str, exit_code: int = 1):
    """Single-line machine-parsable error: 'error <code>: <text>'."""
    click.echo(f"error {code}: {text}", err=True)
    sys.exit(exit_code)


def _load_scenario_or_die(path: str):
    p = Path(path)
    if not p.exists():
        fail("scenario_missing", f"scenario file not found: {p}", exit_code=2)
    try:
        return load_scenario(p)
    except ScenarioError as e:
        fail("scenario_invalid", str(e), exit_code=2)


def _default_log_dir(value: str | None) -> Path:
    if value:
        return Path(value)
    return Path(os.environ.get("TELEOP_LOG_DIR", "logs"))


@click.group()
def main():
    """Shared-control teleoperation pipeline."""


@main.command()
@click.option("--scenario", "scenario_path", required=True, help="Scenario YAML file.")
@click.option("--seed", type=int, default=None, help="Override the scenario seed.")
@click.option("--trials", type=int, default=1, show_default=True)
@click.option(
    "--driver",
    default=None,
    help="scripted:<path> (defaults to the scenario's bundled script) or network.",
)
@click.option("--log-dir", default=None, help="Output directory (env TELEOP_LOG_DIR).")
@click.option("--csv", "as_csv", is_flag=True, help="Emit the aggregate table as CSV.")
def run(scenario_path, seed, trials, driver, log_dir, as_csv):
    """Execute N scripted trials and print the aggregate table."""
    scenario = _load_scenario_or_die(scenario_path)
    if trials < 1:
        fail("bad_trials", "--trials must be >= 1", exit_code=2)

    if driver is None:
        bundled = Path(__file__).parent / "data" / "pickup_script.ndjson"
        driver = f"scripted:{bundled}"
    if driver == "network":
        fail(
            "driver_unsupported",
            "network driving is provided by 'serve'; use --driver scripted:<path>",
            exit_code=2,
        )
    if not driver.startswith("scripted:"):
        fail("bad_driver", f"unknown driver {driver!r}", exit_code=2)
    script_path = Path(driver.split(":", 1)[1])
    if not script_path.exists():
        fail("script_missing", f"driver script not found: {script_path}", exit_code=2)
    scripted = ScriptedDriver.from_file(script_path)

    out_dir = _default_log_dir(log_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base_seed = scenario.seed if seed is None else seed

    results = []
    for i in range(trials):
        trial_seed = base_seed + i
        try:
            log = run_trial(scenario, scripted, seed=trial_seed)
        except Exception as e:  # an errored trial (not a failed one) is fatal
            fail("trial_error", f"trial {i} (seed {trial_seed}): {e}")
        result = result_of(log)
        results.append(result)
        path = out_dir / f"trial_{i:03d}_seed{trial_seed}.ndjson"
        write_log(log, path)
        status = "success" if result.success else "failure"
        click.echo(
            f"trial {i} seed {trial_seed}: {status}"
            f" time={result.completion_time if result.completion_time is not None else float('nan'):.2f}s"
            f" collisions={result.collisions} -> {path}"
        )

    summary = aggregate(results)
    click.echo(summary_csv(summary) if as_csv else format_summary(summary))


@main.command()
@click.argument("log_path", type=click.Path(path_type=Path))
@click.option("--scenario", "scenario_path", required=True, help="Scenario YAML file.")
@click.option("--speed", type=float, default=1.0, show_default=True,
              help="Playback speed factor; must be > 0 (recompute is unpaced).")
def replay(log_path, scenario_path, speed):
    """Re-feed a recorded leader stream; verify the result reproduces."""
    if speed <= 0.0:
        fail("bad_speed", "--speed must be > 0", exit_code=2)
    scenario = _load_scenario_or_die(scenario_path)
    if not log_path.exists():
        fail("log_missing", f"log file not found: {log_path}", exit_code=2)
    try:
        log = read_log(log_path)
    except SchemaMismatch as e:
        fail("schema_mismatch", str(e))
    if log.scenario_hash != scenario.content_hash:
        fail(
            "scenario_mismatch",
            f"log was recorded against scenario {log.scenario_hash}, "
            f"given {scenario.content_hash}",
        )
    try:
        result = replay_trial(scenario, log)
    except ReplayDivergence as e:
        fail("replay_divergence", str(e))
    click.echo(
        f"replay ok: success={result.success}"
        f" time={result.completion_time if result.completion_time is not None else float('nan'):.2f}s"
        f" collisions={result.collisions}"
    )


@main.command()
@click.option("--scenario", "scenario_path", required=True, help="Scenario YAML file.")
@click.option("--tcp-port", type=int, default=7450, show_default=True)
@click.option("--ws-port", type=int, default=7451, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--log-dir", default=None, help="Where the session log is flushed.")
def serve(scenario_path, tcp_port, ws_port, host, log_dir):
    """Run the live control service (TCP framing + websocket /ws) until SIGINT."""
    import uvicorn

    from .service import ControlService, create_app, start_tcp_server

    scenario = _load_scenario_or_die(scenario_path)
    service = ControlService(scenario, log_dir=_default_log_dir(log_dir))
    app = create_app(service)

    async def serve_forever():
        try:
            tcp_server = await start_tcp_server(service, host, tcp_port)
        except OSError as e:
            fail("port_conflict", f"cannot bind tcp {host}:{tcp_port}: {e}", exit_code=3)
        config = uvicorn.Config(app, host=host, port=ws_port, log_level="warning")
        server = uvicorn.Server(config)
        server.install_signal_handlers = lambda: None

        loop_task = asyncio.create_task(service.run())
        http_task = asyncio.create_task(server.serve())
        await asyncio.sleep(0.2)
        if http_task.done() and not server.started:
            fail("port_conflict", f"cannot bind http {host}:{ws_port}", exit_code=3)
        click.echo(f"serving tcp={host}:{tcp_port} ws=ws://{host}:{ws_port}/ws")

        stop = asyncio.Event()
        asyncio.get_running_loop().add_signal_handler(signal.SIGINT, stop.set)
        asyncio.get_running_loop().add_signal_handler(signal.SIGTERM, stop.set)
        await stop.wait()

        service.stop()
        server.should_exit = True
        with contextlib.suppress(Exception):
            await asyncio.wait_for(http_task, timeout=3.0)
        tcp_server.close()
        await tcp_server.wait_closed()
        await loop_task
        path = service.flush_logs()
        if path is not None:
            click.echo(f"session log flushed to {path}")

    asyncio.run(serve_forever())


if __name__ == "__main__":
    main()
