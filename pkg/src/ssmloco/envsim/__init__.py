from .curriculum import CurriculumSchedule
from .metrics import EPISODE_COLUMNS, EpisodeRecord, EvalResult, eval_metrics, read_episode_csv, write_episode_csv
from .randomization import NOMINAL, RANGES, RandomizationDraw, sample_draw
from .render import pixel_angles, ray_box_distances, render_depth
from .scenario import SCENARIOS, ScenarioConfig, canonical_scenario, load_scenario, save_scenario, scenario_from_mapping
from .world import (ALPHA_ALIVE, ALPHA_ENERGY, ALPHA_FWD, CorridorEnv, PlantParams, Terrain, WorldState,
                    compute_reward, disk_box_contact)
