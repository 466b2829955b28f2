# Little utility to run a sweep as a separate process, to allow analysis of finished cells while the rest trains.

from pathlib import Path

from neuralq_lab.harness.config import load_config
from neuralq_lab.harness.plots import PlotKind, emit_plots
from neuralq_lab.harness.sweep import run_sweep
from neuralq_lab.utils import configure_logging, print_summary

# Parameters
config_path = Path("./data/configs/convergence.json")
workers = 4
log_level = "INFO"


if __name__ == "__main__":
    configure_logging(log_level)
    config = load_config(config_path)
    result = run_sweep(config, workers=workers)

    plots = emit_plots(result.output_dir / "aggregate.csv", result.output_dir, [PlotKind.FINAL_GAP])
    print_summary(
        "Sweep finished",
        cells=len(result.aggregate),
        failed=result.n_failed,
        config_hash=result.config_hash,
        plot=str(plots[0]),
    )
