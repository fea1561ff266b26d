"""fraudlens: spot new lockstep card-fraud behaviors and justify every alarm.

Pipeline: ingest a transaction ledger, extract per-card repetition
features in one linear pass, surface micro-clusters on log-log heatmaps,
classify flagged cards into behavior archetypes, and serve explorable
dashboard evidence (egonet main core, cadence scatter, annotated
spreadsheet, temporal evolution) for each one.
"""

__version__ = "0.1.0"
