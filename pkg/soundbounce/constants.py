"""Default physical and experimental constants.

Every number the experiments depend on is declared here once; config models and
CLI defaults read from this module.
"""

# -- ball / surface physics -------------------------------------------------
GRAVITY = 9.81  # m/s^2
BALL_RADIUS = 0.02  # m, ping-pong sized; used only for paddle and cup contact
BALL_MASS = 0.0027  # kg
DROP_HEIGHT = 0.26  # m, calibration drops
INIT_VELOCITY_NOISE_SIGMA = 0.01  # m/s, isotropic hand-release noise
N_BOUNCES_FEATURES = 3  # bounces needed for one feature vector
COLLISION_MODE = "full"  # restitution scales the full exit speed
VMF_MAX_RESAMPLES = 64  # sub-surface exit directions redrawn before mirroring
DEGENERATE_DISTANCE = 1e-9  # m, shorter bounce vectors have no defined turn angle
LOG10_KAPPA_BOUNDS = (-12.0, 15.0)  # kappa stays finite and the vMF sampler stays accurate

# -- calibration prior ------------------------------------------------------
PRIOR_E_RANGE = (0.55, 0.95)
PRIOR_LOG10_KAPPA_RANGE = (1.0, 5.0)
N_TRAIN_SIMULATIONS = 6000
N_TEST_SIMULATIONS = 1000
OFFLINE_LOCALIZATION_SIGMA = 0.0067  # m, offline acoustic localization error
ONLINE_LOCALIZATION_SIGMA = 0.0079  # m, real-time acoustic localization error

# -- mixture density network ------------------------------------------------
MDN_COMPONENTS = 6
MDN_HIDDEN_SIZES = (64, 64)
MDN_ACTIVATION = "tanh"
MDN_LEARNING_RATE = 1e-3
MDN_MOMENTUM = 0.9
MDN_EPOCHS = 500
MDN_BATCH_SIZE = 128
MDN_GRAD_CLIP = 5.0
MDN_VARIANCE_FLOOR = 1e-6
MODE_GRID_POINTS = 201  # per dimension, for D <= 2
MODE_GRID_POINTS_HIGH_DIM = 41  # per dimension, for D > 2

# -- acoustics --------------------------------------------------------------
TABLE_SIZE = 0.55  # m, square table edge
MIC_HEIGHT = 0.0762  # m, microphones 3 in above the table
SAMPLE_RATE = 44100  # Hz
SPEED_OF_SOUND = 343.0  # m/s
IMPULSE_FREQUENCY = 4000.0  # Hz, damped-sinusoid impact template
IMPULSE_TAU = 0.003  # s, template decay constant
IMPULSE_AMPLITUDE = 0.05  # template peak amplitude at 1 m
IMPULSE_DURATION = 0.02  # s, template support
PHASE_WINDOW = 0.025  # s, offline segment length (must be >= 20 ms)
PHASE_PRE_ROLL = 0.002  # s, offline segment start before the first onset
ONLINE_BUFFER = 0.011  # s, real-time buffer length
THRESHOLD_FACTOR = 8.0  # onset threshold as a multiple of the noise-floor RMS
NOISE_WINDOW = 0.05  # s, running noise-floor history
MIN_THRESHOLD = 1e-4  # absolute onset threshold floor
REFRACTORY = 0.04  # s, onsets ignored after a detection
LOCALIZE_MAX_ITERATIONS = 100
LOCALIZE_TOLERANCE = 1e-9  # m, residual norm treated as converged
LOCALIZE_RESIDUAL_LIMIT = 5e-3  # m, larger final residual means failure

# -- dynamics predictor -----------------------------------------------------
BELIEF_SAMPLES = 256
ROLLOUT_SAMPLES = 10  # n samples per lookahead level
ROLLOUT_DEPTH = 4  # k lookahead bounces (2..4)
OUTLIER_CONFIDENCE = 0.975
TRANSITION_SIMULATIONS = 2000
TRANSITION_BOUNCES = 8

# -- tracking ---------------------------------------------------------------
ROBOT_PLANE_X = 0.85  # m
WORKSPACE_Y = (0.0, 0.55)  # m
WORKSPACE_Z = (0.0, 0.45)  # m
PADDLE_RADIUS = 0.05715  # m, half of a 4.5 in paddle
MAX_EFFECTOR_SPEED = 1.0  # m/s
CONTROLLER_GAIN = 0.02  # m, step fraction = clamp(c / sigma, 0, 1)
OUTLIER_PROBABILITY = 0.1
OUTLIER_MAGNITUDE = (0.03, 0.1)  # m
TOSS_HEIGHT = (0.30, 0.40)  # m
TOSS_Y = (0.20, 0.35)  # m
TOSS_VX = (0.70, 1.00)  # m/s toward the robot
TOSS_VY_SIGMA = 0.08  # m/s
TOSS_VZ_SIGMA = 0.10  # m/s
TRIALS_PER_BATCH = 30
MAX_TRIAL_BOUNCES = 20

# -- ball-in-cup ------------------------------------------------------------
INCLINE_DEGREES = 10.72
CUP_DISTANCE = 0.21844  # m, 8.6 in from the bottom of the incline
CUP_RADIUS = 0.045  # m, cup opening
CUP_HEIGHT = 0.09  # m, cup opening above the floor
CUP_DROP_NOISE_SIGMA = 0.0  # m/s, gripper releases without hand noise
CUP_GRID_X = (-0.45, -0.05, 9)  # start, stop, count along the incline
CUP_GRID_Y = (-0.08, 0.08, 5)
CUP_TRIALS_PER_CELL = 20
