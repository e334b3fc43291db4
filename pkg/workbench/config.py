import os
from dotenv import load_dotenv

load_dotenv()

VERSION = "0.1.0"

# Runtime Configuration
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
WORKERS = int(os.getenv("WORKERS", 1))

# Metric Configuration
MOVING_AVERAGE_WINDOW = int(os.getenv("MOVING_AVERAGE_WINDOW", 50))
TOP_K = int(os.getenv("TOP_K", 3))

# Divergence guard shared by all learners
MAX_ABS_Q = float(os.getenv("MAX_ABS_Q", 1e6))

# Paths
RESULTS_DIR = os.getenv(
    "RESULTS_DIR",
    os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "results"),
)

# Ensure results directory exists
os.makedirs(RESULTS_DIR, exist_ok=True)

# DQN settings for CartPole
CARTPOLE_DQN_DEFAULTS = {
    "discount": 0.9,
    "n_epochs": 100,
    "steps_per_epoch": 10,
    "num_train_steps": 500,
    "target_update_frequency": 30,
    "buffer_size": 1_000_000,
    "hidden_sizes": (8, 5),
    "buffer_batch_size": 64,
    "max_epsilon": 1.0,
    "min_epsilon": 0.01,
    "decay_ratio": 0.4,
    # the table pairs 5e-5 with ten times as many gradient steps per outer iteration;
    # at 50 steps per episode Adam cannot lift the head to the Q scale of 1 / (1 - gamma)
    "lr": 1e-3,
    "per_alpha": 0.4,
    "per_beta": 0.6,
    "mixing_p": 0.0,
}

# Tabular settings for GridWorld-1D
GRIDWORLD_DEFAULTS = {
    "discount": 0.99,
    "n_epochs": 100,
    "buffer_size": 30_000,
    "buffer_batch_size": 64,
    "exploration": 0.3,
    "lr": 0.1,
}

# Offline toy protocol. OER replays the top B*G transitions by TD error, so B*G has to stay
# below the count of trap transitions (about 1000 in a 30000-step buffer); past that, zero-score
# ties pull the newest transitions into every epoch. Scores are refreshed every
# TOY_RESCORE_EVERY epochs, so OER moves its frontier one state per refresh.
TOY_GRAD_STEPS = 10
TOY_RESCORE_EVERY = 5

# One episode per outer iteration: 100 epochs x 10 steps, 500 / 10 gradient steps each
CARTPOLE_EPISODES = CARTPOLE_DQN_DEFAULTS["n_epochs"] * CARTPOLE_DQN_DEFAULTS["steps_per_epoch"]
CARTPOLE_GRAD_STEPS = CARTPOLE_DQN_DEFAULTS["num_train_steps"] // CARTPOLE_DQN_DEFAULTS["steps_per_epoch"]
