"""
Command-line layer: run configuration and the prcaps sub-commands.
"""

from src.cli.config import (
    RESOLVED_CONFIG_NAME,
    THREADS_ENV_VAR,
    AblationGrid,
    AblationSection,
    DataSection,
    RunConfig,
    RunSection,
    SyntheticSection,
    apply_overrides,
    build_run_config,
    load_run_config,
    parse_dims,
    read_config_file,
    thread_cap,
    write_resolved_config,
)
from src.cli.commands import (
    EMBEDDINGS_NAME,
    REPORT_NAME,
    SUMMARY_COLUMNS,
    SUMMARY_NAME,
    ablation_cells,
    cmd_ablate,
    cmd_eval,
    cmd_export_embeddings,
    cmd_gen_synthetic,
    cmd_train,
    load_dataset,
    prepare_output_dir,
    summarize_ablation,
)

__all__ = [
    'RESOLVED_CONFIG_NAME',
    'THREADS_ENV_VAR',
    'AblationGrid',
    'AblationSection',
    'DataSection',
    'RunConfig',
    'RunSection',
    'SyntheticSection',
    'apply_overrides',
    'build_run_config',
    'load_run_config',
    'parse_dims',
    'read_config_file',
    'thread_cap',
    'write_resolved_config',
    'EMBEDDINGS_NAME',
    'REPORT_NAME',
    'SUMMARY_COLUMNS',
    'SUMMARY_NAME',
    'ablation_cells',
    'cmd_ablate',
    'cmd_eval',
    'cmd_export_embeddings',
    'cmd_gen_synthetic',
    'cmd_train',
    'load_dataset',
    'prepare_output_dir',
    'summarize_ablation',
]
