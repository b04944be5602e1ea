"""
CAPA Analyzer

Measurement and reporting tools built on the engine.

Components:
- sinks: sink value, probability dump / structural anchor taxonomy
- divergence: Hellinger traces against the vanilla model, keep-ratio sweeps
- flops: analytical cost model and component breakdown
- contribution_trace: per-layer mean contribution of visual and text keys
- reports: CSV writer with the reproducibility header
"""

__version__ = "0.1.0"

from .contribution_trace import ContributionTrajectory, LayerContribution, contribution_trace
from .divergence import (
    DivergenceTrace,
    SweepPoint,
    hellinger,
    probabilities,
    ratio_sweep,
    recompute_divergence,
    trace_divergence,
)
from .flops import (
    COMPONENTS,
    PRESETS,
    CostEntry,
    CostReport,
    CostSpec,
    attention_speedup,
    cost_formulas,
    cost_report,
    ffn_flops,
    hadamard_flops,
    linear_speedup,
    llava7b_spec,
    pipeline_report,
    reduction_factor,
    sequence_lengths,
)
from .reports import header_line, read_csv, render_csv, write_csv
from .sinks import SinkClass, SinkRecord, classify, sink_report, sink_value

__all__ = [
    'ContributionTrajectory', 'LayerContribution', 'contribution_trace',
    'DivergenceTrace', 'SweepPoint', 'hellinger', 'probabilities', 'ratio_sweep',
    'recompute_divergence', 'trace_divergence',
    'COMPONENTS', 'PRESETS', 'CostEntry', 'CostReport', 'CostSpec', 'attention_speedup',
    'cost_formulas', 'cost_report', 'ffn_flops', 'hadamard_flops', 'linear_speedup',
    'llava7b_spec', 'pipeline_report', 'reduction_factor', 'sequence_lengths',
    'header_line', 'read_csv', 'render_csv', 'write_csv',
    'SinkClass', 'SinkRecord', 'classify', 'sink_report', 'sink_value',
]
