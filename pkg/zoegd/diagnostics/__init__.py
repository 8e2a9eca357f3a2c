from zoegd.diagnostics.block import MonotoneDecrease, PerturbationSpacing, ReturnPointCheck, TraceBlock
from zoegd.diagnostics.coupling import CouplingSeries, coupling_experiment, escape_window
from zoegd.diagnostics.descent import DescentCheck, descent_check
from zoegd.diagnostics.escape import EscapeRun, EscapeStats, escape_experiment
from zoegd.diagnostics.scaling import ScalingRow, ScalingTable, scaling_study
