"""Figure rendering for scenario runs.

Kept separate from the runner so headless runs that only want logs and
JSON never import matplotlib.  PNGs are written without the Software
metadata stamp; with Agg and fixed inputs the bytes are reproducible.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

_SAVE_KW = {"dpi": 110, "metadata": {"Software": None}}


def _per_second(times_ms, horizon_s: int) -> list[int]:
    buckets = [0] * (horizon_s + 1)
    for t in times_ms:
        second = t // 1000
        if 0 <= second < len(buckets):
            buckets[second] += 1
    return buckets


def render_figures(outdir: str | Path, report, handles) -> dict[str, Path]:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    horizon_s = handles.scenario.duration_s
    written: dict[str, Path] = {}

    # -- traffic timeline ---------------------------------------------------
    fig, ax = plt.subplots(figsize=(9, 4.2))
    if handles.tap is not None and handles.tap.entries:
        entries = handles.tap.entries
        seconds = range(horizon_s + 1)
        dgrams = _per_second((e.t for e in entries if e.kind == "dgram"), horizon_s)
        chunks = _per_second((e.t for e in entries if e.kind != "dgram"), horizon_s)
        ax.bar(seconds, dgrams, width=0.9, label="datagrams seen", color="#4878a8")
        if any(chunks):
            ax.bar(seconds, chunks, width=0.9, bottom=dgrams,
                   label="stream chunks seen", color="#9ecae1")
        tampered = _per_second((e.t for e in entries if e.tampered), horizon_s)
        if any(tampered):
            ax.plot(seconds, tampered, drawstyle="steps-mid", color="#c44e52",
                    linewidth=1.6, label="tampered per second")
        title = f"{report.scenario}: traffic through the open hop"
    else:
        wire = handles.network.wire_log
        seconds = range(horizon_s + 1)
        sent = _per_second((w.t for w in wire), horizon_s)
        dropped = _per_second((w.t for w in wire if not w.delivered), horizon_s)
        ax.bar(seconds, sent, width=0.9, label="hops attempted", color="#4878a8")
        if any(dropped):
            ax.plot(seconds, dropped, drawstyle="steps-mid", color="#c44e52",
                    linewidth=1.6, label="dropped per second")
        title = f"{report.scenario}: wire activity (no tap attached)"
    ax.set_title(title)
    ax.set_xlabel("virtual time (s)")
    ax.set_ylabel("frames")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    timeline = out / "traffic_timeline.png"
    fig.savefig(timeline, **_SAVE_KW)
    plt.close(fig)
    written["traffic_timeline"] = timeline

    # -- recovery summary ---------------------------------------------------
    fig, ax = plt.subplots(figsize=(7.5, 4.2))
    labels = [
        "lines\nemitted",
        "lines\nrecovered",
        "commands\nsent",
        "commands\nrecovered",
        "tamper\nattempts",
        "auth\nfailures",
        "tampered\naccepted",
    ]
    values = [
        report.lines_emitted,
        report.plaintext_lines_recovered,
        report.commands_sent,
        report.commands_recovered,
        report.tamper_attempts,
        report.tamper_auth_failures,
        report.tampered_commands_accepted,
    ]
    colors = ["#4878a8", "#c44e52", "#4878a8", "#c44e52", "#999999", "#55a868", "#c44e52"]
    bars = ax.bar(range(len(values)), values, color=colors)
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_ylabel("count")
    ax.set_title(f"{report.scenario}: what the adversary got ({report.adversary})")
    for bar, value in zip(bars, values):
        ax.annotate(str(value), (bar.get_x() + bar.get_width() / 2, bar.get_height()),
                    ha="center", va="bottom", fontsize=8)
    fig.tight_layout()
    summary = out / "recovery_summary.png"
    fig.savefig(summary, **_SAVE_KW)
    plt.close(fig)
    written["recovery_summary"] = summary

    return written
