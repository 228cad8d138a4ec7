from typing import Dict, List, Mapping, Sequence

CONFIG_HEADER = "# effective configuration (re-parses to the same run)"


def config_echo(sections: Mapping[str, Mapping[str, str]]):
    """
    set's up the effective-config text: one [section] per group, one key = value per line
    """
    blocks = [CONFIG_HEADER]
    for name, values in sections.items():
        lines = [f"[{name}]"] + [f"{key} = {value}" for key, value in values.items()]
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def format_cell(value):
    if value is None:
        return "-"
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return f"{value:.3f}"
    return str(value)


def layer_table(rows: List[Mapping], columns: Sequence[str]):
    """
    Fixed-width text table, one line per layer plus a rule under the header
    """
    cells = [[format_cell(row.get(c)) for c in columns] for row in rows]
    widths = [max([len(c)] + [len(r[i]) for r in cells]) for i, c in enumerate(columns)]
    header = "  ".join(c.rjust(w) for c, w in zip(columns, widths))
    rule = "  ".join("-" * w for w in widths)
    body = ["  ".join(v.rjust(w) for v, w in zip(r, widths)) for r in cells]
    return "\n".join([header, rule] + body)


def summary_block(summary: Mapping):
    """
    set's up the run summary shown under the layer table
    """
    error = summary.get("popcount_error", {})
    tags = summary.get("extrapolations") or []
    extrapolated = f"Extrapolated modes: {', '.join(tags)}\n" if tags else ""
    return (
        f"Images: {summary.get('images')}   Trials: {summary.get('trials')}\n"
        f"Accuracy: {format_cell(summary.get('accuracy'))}\n"
        f"Popcount error: mean {format_cell(error.get('mean'))}, std {format_cell(error.get('std'))} "
        f"over {error.get('count', 0)} elements\n"
        f"Energy per inference: {format_cell(summary.get('energy_pj_per_inference'))} pJ\n"
        f"Latency per inference: {format_cell(summary.get('latency_ns_per_inference'))} ns\n"
        f"Binary MAC fraction: {format_cell(summary.get('binary_mac_fraction'))}\n"
        f"{extrapolated}"
    )


def speedup_block(speedups: Mapping[str, Mapping]):
    rows = [{"layer": tag, "energy_ratio": s.get("energy_ratio"), "latency_ratio": s.get("latency_ratio")}
            for tag, s in speedups.items()]
    return "Speedup vs baseline (per inference)\n" + layer_table(rows, ("layer", "energy_ratio", "latency_ratio"))


def explain_block(layer: str, events: Dict[str, Mapping]):
    """
    Per-event breakdown of one layer for --explain
    """
    rows = [{"event": kind, **values} for kind, values in events.items()]
    return f"Layer {layer}\n" + layer_table(rows, ("event", "count", "energy_pj", "latency_ns"))
