STATE_CAP = 10_000  # Progression states before compilation gives up
TRACE_LEN = 6  # Longest trace the oracle suites enumerate

GRID_CAP = 5_000  # Task configs per node before enumeration turns into sampling
CANDIDATE_CAP = 1_000_000  # Curriculum candidates before sampling is forced
NODE_SAMPLES = 25  # b, tasks sampled per node when sampling
SAMPLE_RETRIES = 100  # Draws per wanted task before giving up on distinct ones
SUBSET_FRACTION = 1.0
GRAPH_PER_PATH = None  # Best candidates kept per trace path, None keeps all
ETA_PERCENTILE = 40  # Default eta, as a percentile of candidate scores

BETA_FLOOR = 1e-6
WEIGHT_TOLERANCE = 1e-9

STEP_CAP = 500  # Steps per episode
SUCCESS_REWARD = 1000.0
STEP_REWARD = -1.0

HIDDEN = (64, 64)
REPLAY_CAPACITY = 50_000
BATCH_SIZE = 64
GAMMA = 0.99
LEARNING_RATE = 5e-4
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
OUTPUT_GAIN = 0.01  # Scales the initial output weights so Q starts near 0
EPS_START = 1.0
EPS_END = 0.05
EPS_FRACTION = 0.1  # Share of the budget epsilon takes to anneal
TARGET_SYNC = 1_000
EVAL_EVERY = 5_000
EVAL_EPISODES = 50
SOURCE_THRESHOLD = 0.9  # Success rate that ends a source task early
HUBER_DELTA = 1.0
GRAD_CLIP = 10.0
REWARD_SCALE = 1e-3  # Learner-side only, reports keep raw returns
LEARNING_STARTS = 1_000

GSRS_SCALE = 1.0
THRESHOLD = 0.8  # delta for time-to-threshold
VARIANCE_FLOOR = 1e-12
GRADCHECK_TOLERANCE = 1e-4

TOTAL_BUDGET = 200_000
REPLICATES = 10
