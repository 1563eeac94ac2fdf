"""Command line entry point.

Exit status: 0 success, 1 configuration error, 2 some stage failed.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

from .ingest import ArticleStore, as_utc
from .pipeline import RunReport, ingest_sources, inspect_window, load_config, run_once
from .publish import ConfigError, make_server

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2


def _timestamp(text: str) -> datetime:
    try:
        return as_utc(datetime.fromisoformat(text.strip().replace("Z", "+00:00")))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an ISO 8601 timestamp: {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="newsburst", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", type=Path, required=config_required, help="pipeline TOML file")
        p.add_argument("--now", type=_timestamp, default=None, help="reference time (ISO 8601), default: current time")

    p = sub.add_parser("ingest", help="poll feeds and store articles only")
    common(p)

    for name, help_ in (("run", "full pipeline run"), ("replay", "full run against a fixture directory, offline")):
        p = sub.add_parser(name, help=help_)
        if name == "replay":
            p.add_argument("fixtures", type=Path, help="directory with manifest.json, feeds and pages")
        common(p, config_required=(name == "run"))
        p.add_argument("--report", type=Path, help="also write the report as JSON here")
        p.add_argument("--json", action="store_true", help="print the JSON report instead of the summary")
        p.add_argument("--timings", action="store_true", help="include stage timings in the JSON report")

    p = sub.add_parser("inspect", help="dump the window's similarity matrix, cliques and scores")
    common(p)

    p = sub.add_parser("serve-feed", help="serve the RSS feed and hosted images over HTTP")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    return parser


def _emit_report(report: RunReport, args) -> int:
    if args.json:
        sys.stdout.write(report.to_json(args.timings))
    else:
        sys.stdout.write(report.summary())
    if args.report:
        args.report.parent.mkdir(parents=True, exist_ok=True)
        args.report.write_text(report.to_json(args.timings), encoding="utf-8")
    return EXIT_PARTIAL if report.partial_failure else EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    now = getattr(args, "now", None) or datetime.now(timezone.utc)

    try:
        if args.command == "replay":
            config_path = args.config or args.fixtures / "config.toml"
            cfg = replace(load_config(config_path), fixture_dir=args.fixtures)
            if not (args.fixtures / "manifest.json").is_file():
                raise ConfigError(f"no manifest.json in {args.fixtures}")
        else:
            cfg = load_config(args.config)
    except ConfigError as e:
        print(f"newsburst: configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command in ("run", "replay"):
        return _emit_report(run_once(cfg, now), args)

    if args.command == "ingest":
        report = RunReport(now=now.isoformat())
        ingest_sources(cfg, ArticleStore(cfg.article_dir), now, cfg.fetcher(), report)
        sys.stdout.write(report.summary())
        return EXIT_PARTIAL if report.partial_failure else EXIT_OK

    if args.command == "inspect":
        json.dump(inspect_window(cfg, now), sys.stdout, ensure_ascii=False, indent=1)
        sys.stdout.write("\n")
        return EXIT_OK

    # serve-feed
    feeds = [c for c in cfg.channels if c.kind == "rss"]
    if not feeds:
        print("newsburst: configuration error: no rss channel configured", file=sys.stderr)
        return EXIT_CONFIG
    root = Path(feeds[0].settings["feed_path"]).parent
    root.mkdir(parents=True, exist_ok=True)
    server = make_server(root, args.host, args.port)
    print(f"serving {root} on http://{args.host}:{server.server_address[1]}/", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
