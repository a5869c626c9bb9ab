"""Parameter counts for every model variant.

First the two published-table rows (Car Flag and Hallway) under the aligned
configuration, then the per-submodule breakdown for one row, and finally the
size advantage of the bi-directional GRU sublayer over a 4x-expansion FFN at
the wider D=128 setting.
"""
from dbgfqn.harness import parse_report, report_parameters, sweep_configs
from dbgfqn.model_zoo import ALIGNED_ROWS, COLUMNS, PUBLISHED_COUNTS, EncoderConfig

for row in ALIGNED_ROWS:
    report = parse_report(report_parameters(EncoderConfig(**ALIGNED_ROWS[row])))
    print(f"\n{row}")
    for column in COLUMNS:
        ours = report[column]["total"]
        published = PUBLISHED_COUNTS.get(row, {}).get(column)
        mark = "" if published is None else ("  matches" if published == ours else f"  published {published:,}")
        print(f"  {column:7s} {ours:>9,}{mark}")

print("\nCar Flag DBGFQN by submodule")
for name, count in parse_report(report_parameters(EncoderConfig(**ALIGNED_ROWS["Car Flag"])))["DBGFQN"].items():
    print(f"  {name:24s} {count:>8,}")

wide = sweep_configs(EncoderConfig(obs_width=66, action_count=3, embed_dim=128), ["DTQN4", "DBGFQN"])
report = parse_report(report_parameters(wide))
print(f"\nD=128: DTQN4 {report['DTQN4']['total']:,} vs DBGFQN {report['DBGFQN']['total']:,} "
      f"({report['DBGFQN_vs_DTQN4']['reduction_percent']:.1f}% smaller)")
