"""Command-line surface.

Subcommands: ``tbox validate``, ``extract``, ``infer``, ``answer``,
``eval``, ``pipeline run``. The packaged reference schema and schedule
set are used when ``--tbox``/``--schedules`` are not given. A JSON config
file (``--config``) can pin the schedule path, derivation cap, extractor
endpoint, and iteration cap; the ``SOLAR_EXTRACTOR_URL`` environment
variable configures the HTTP extraction backend.
"""

from __future__ import annotations

import json
import sys
from importlib import resources
from pathlib import Path

import click

from . import engine, harness, pipeline, report as report_mod, serialize
from .errors import SolarError
from .extraction import get_backend, make_case
from .interpreter import DEFAULT_PRECEDENCE, load_schedules
from .ontology import Severity, validate_abox, validate_tbox


def _packaged(name: str):
    return resources.files("solar").joinpath(f"data/{name}")


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _load_tbox(path: str | None):
    if path:
        return serialize.load_tbox_file(path)
    return serialize.decode_tbox(json.loads(_packaged("reference_tbox.json").read_text()))


def _load_schedules(path: str | None, config: dict):
    path = path or config.get("schedules")
    if path:
        return load_schedules(path)
    from .interpreter import decode_schedules

    return decode_schedules(json.loads(_packaged("schedules.json").read_text()))


def _echo_findings(findings) -> None:
    for f in findings:
        click.echo(f"{f.severity.value.upper()}: [{f.code}] {f.message}")


class _Group(click.Group):
    """Surface engine errors as clean CLI errors with their codes."""

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except SolarError as exc:
            raise click.ClickException(f"[{exc.code}] {exc.message}") from exc


@click.group(cls=_Group)
@click.version_option(package_name="solar")
def main() -> None:
    """Statutory reasoning over formal statute schemas."""


@main.group()
def tbox() -> None:
    """Schema (TBox) operations."""


@tbox.command("validate")
@click.argument("file", type=click.Path(exists=True))
def tbox_validate(file: str) -> None:
    """Validate a TBox file; exits nonzero when invalid."""
    box = serialize.load_tbox_file(file)
    result = validate_tbox(box)
    _echo_findings(result.findings)
    click.echo("VALID" if result.is_valid else "INVALID")
    if not result.is_valid:
        sys.exit(1)


@main.command()
@click.option("--case", "case_path", required=True, type=click.Path(exists=True), help="Case file (text format).")
@click.option("--tbox", "tbox_path", type=click.Path(exists=True), help="TBox file (defaults to packaged schema).")
@click.option("--backend", default="deterministic", show_default=True, help="deterministic or http.")
@click.option("--out", type=click.Path(), help="Write the extracted ABox JSON here (stdout otherwise).")
def extract(case_path: str, tbox_path: str | None, backend: str, out: str | None) -> None:
    """Map a case narrative onto the schema, producing an ABox."""
    from .extraction import extract as run_extract

    box = _load_tbox(tbox_path)
    eval_case = harness.parse_case_file(Path(case_path).stem, Path(case_path).read_text(encoding="utf-8"))
    result = run_extract(eval_case.as_case_text(), box, get_backend(backend))
    doc = serialize.dumps(serialize.encode_abox(result.abox))
    if out:
        Path(out).write_text(doc, encoding="utf-8")
        click.echo(f"wrote {out}")
    else:
        click.echo(doc, nl=False)
    for span in result.unmapped_spans:
        click.echo(f"unmapped [{span.reason}]: {span.text}", err=True)


@main.command()
@click.option("--tbox", "tbox_path", type=click.Path(exists=True), help="TBox file (defaults to packaged schema).")
@click.option("--abox", "abox_path", required=True, type=click.Path(exists=True))
@click.option("--trace", "trace_path", type=click.Path(), help="Write the proof trace here.")
@click.option("--out", type=click.Path(), help="Write the enriched ABox here.")
@click.option("--config", "config_path", type=click.Path(exists=True))
def infer(tbox_path: str | None, abox_path: str, trace_path: str | None, out: str | None, config_path: str | None) -> None:
    """Derive entailed facts by forward inference."""
    config = _load_config(config_path)
    box = _load_tbox(tbox_path)
    abox = serialize.load_abox_file(abox_path, box)
    cap = int(config.get("max_derived_facts", engine.DEFAULT_DERIVATION_CAP))
    enriched, inferred, trace = engine.enrich(box, abox, max_derived=cap)
    for a in inferred:
        click.echo(a.render())
    click.echo(f"{len(inferred)} inferred")
    if trace_path:
        Path(trace_path).write_text(json.dumps(engine.export_trace(trace), indent=2) + "\n", encoding="utf-8")
    if out:
        Path(out).write_text(serialize.dumps(serialize.encode_abox(enriched)), encoding="utf-8")


@main.command()
@click.option("--tbox", "tbox_path", type=click.Path(exists=True), help="TBox file (defaults to packaged schema).")
@click.option("--abox", "abox_path", required=True, type=click.Path(exists=True))
@click.option("--schedules", "schedules_path", type=click.Path(exists=True), help="Schedule file (defaults to packaged data).")
@click.option("--year", required=True, type=int)
@click.option("--subject", help="Taxpayer to compute for, when the ABox holds several.")
@click.option("--config", "config_path", type=click.Path(exists=True))
def answer(tbox_path: str | None, abox_path: str, schedules_path: str | None, year: int, subject: str | None, config_path: str | None) -> None:
    """Run inference and the statute interpreter on an ABox."""
    from .interpreter import compute_tax

    config = _load_config(config_path)
    box = _load_tbox(tbox_path)
    abox = serialize.load_abox_file(abox_path, box)
    schedules = _load_schedules(schedules_path, config)
    report = validate_abox(abox, box)
    if not report.is_valid:
        _echo_findings(report.errors())
        raise SolarError("ABox does not validate against the TBox")
    enriched, inferred, _ = engine.enrich(box, abox)
    liability, log = compute_tax(enriched, schedules, year, subject=subject)
    click.echo(f"filing status: {log.filing.status.value}")
    for step in log.steps:
        inputs = ", ".join(str(x) for x in step.inputs)
        click.echo(f"{step.label}: {step.output}" + (f" (from {inputs})" if inputs else ""))
    click.echo(f"liability: {liability}")


@main.command("eval")
@click.option("--dataset", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--tbox", "tbox_path", type=click.Path(exists=True), help="TBox file (defaults to packaged schema).")
@click.option("--schedules", "schedules_path", type=click.Path(exists=True), help="Schedule file (defaults to packaged data).")
@click.option("--backend", default="deterministic", show_default=True)
@click.option("--jobs", default=1, show_default=True, type=int)
@click.option("--report", "report_path", type=click.Path(), help="CSV report path; JSON and figures are written alongside.")
@click.option("--config", "config_path", type=click.Path(exists=True))
def eval_cmd(dataset: str, tbox_path: str | None, schedules_path: str | None, backend: str, jobs: int, report_path: str | None, config_path: str | None) -> None:
    """Evaluate the end-to-end pipeline on a dataset directory."""
    config = _load_config(config_path)
    box = _load_tbox(tbox_path)
    schedules = _load_schedules(schedules_path, config)
    cases = harness.load_dataset(dataset)
    result = harness.run_eval(cases, box, schedules, get_backend(backend, config.get("extractor_url")), jobs=jobs)
    for row in result.rows:
        status = "PASS" if row.passed else f"FAIL ({row.classification})"
        predicted = row.predicted if row.predicted is not None else "-"
        click.echo(f"{row.case_id}: predicted={predicted} gold={row.gold} {status}")
    click.echo(f"accuracy: {result.accuracy:.4f} on {len(result.rows)} cases (backend={result.backend})")
    if report_path:
        for path in report_mod.write_report(result, report_path):
            click.echo(f"wrote {path}")


@main.group("pipeline")
def pipeline_group() -> None:
    """Knowledge-acquisition pipeline."""


@pipeline_group.command("run")
@click.option("--fragments", required=True, type=click.Path(exists=True, file_okay=False), help="Directory of TBox fragment JSON files.")
@click.option("--train", required=True, type=click.Path(exists=True, file_okay=False), help="Directory of training case files.")
@click.option("--schedules", "schedules_path", type=click.Path(exists=True), help="Schedule file (defaults to packaged data).")
@click.option("--max-iter", default=10, show_default=True, type=int)
@click.option("--backend", default="deterministic", show_default=True)
@click.option("--out", "out_template", default="tbox.v{k}.json", show_default=True, help="Output TBox path; {k} becomes the final version.")
@click.option("--config", "config_path", type=click.Path(exists=True))
def pipeline_run(fragments: str, train: str, schedules_path: str | None, max_iter: int, backend: str, out_template: str, config_path: str | None) -> None:
    """Integrate fragments, evaluate on training cases, refine to convergence."""
    config = _load_config(config_path)
    schedules = _load_schedules(schedules_path, config)
    fragment_files = sorted(Path(fragments).glob("*.json"))
    if not fragment_files:
        raise SolarError(f"no fragment files in {fragments}")
    boxes = pipeline.load_fragment_files(fragment_files)
    cases = harness.load_dataset(train)
    train_pairs = [(c.as_case_text(), c.gold) for c in cases]
    max_iter = int(config.get("max_iterations", max_iter))
    result = pipeline.run_pipeline(
        boxes, train_pairs, schedules, get_backend(backend, config.get("extractor_url")), max_iterations=max_iter
    )

    for it in result.iterations:
        click.echo(f"iteration {it.iteration} (tbox v{it.tbox_version}): {len(it.failures)} failures")
        for failure in it.failures:
            click.echo(f"  {failure.case_id}: {failure.classification.value} (expected {failure.expected}, got {failure.got})")
    click.echo(f"final status: {result.state.status.value} after {result.state.iteration} iterations")

    out_path = Path(out_template.replace("{k}", str(result.state.tbox.version)))
    serialize.save_tbox_file(out_path, result.state.tbox)
    click.echo(f"wrote {out_path}")
    report_path = out_path.with_name(out_path.stem + ".report.json")
    doc = {
        "status": result.state.status.value,
        "iterations": [
            {
                "iteration": it.iteration,
                "tbox_version": it.tbox_version,
                "failures": [
                    {
                        "case_id": f.case_id,
                        "classification": f.classification.value,
                        "expected": str(f.expected),
                        "got": str(f.got) if f.got is not None else None,
                        "evidence": list(f.evidence),
                    }
                    for f in it.failures
                ],
            }
            for it in result.iterations
        ],
        "tickets": list(result.state.tickets),
        "transitions": result.transitions,
    }
    report_path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    click.echo(f"wrote {report_path}")
    if result.state.status.value != "Converged":
        sys.exit(2)


if __name__ == "__main__":
    main()
