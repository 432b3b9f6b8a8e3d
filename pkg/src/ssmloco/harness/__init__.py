from .analytics import cov, efficiency_stats, lsq_slope, stability_stats
from .bench import bench_scan, loglog_slope, slopes
from .config import RunConfig, desk_config, load_run_config, paper_config, save_run_config
from .evaluate import EvalSummary, evaluate, evaluate_policy, random_policy
from .train import RunMetrics, load_agent, train
