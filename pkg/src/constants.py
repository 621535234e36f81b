VERSION = "0.3.0"

##### General Flags #####
PROFILING = False

##### Paths #####
P_OUTPUT_PATH = "./output"
P_PROFILING_PATH = "./profiling/"

# Artifact names written by `fit` and read back by `effects` and `check`
P_ESTIMATES_FILE = "estimates.json"
P_DRAWS_FILE = "draws.csv"
P_COUNTERFACTUAL_FILE = "counterfactuals.csv"
P_META_FILE = "meta.json"
P_CHECK_FILE = "check.json"

# Effect tables
P_ATT_FILE = "att.csv"
P_HETERO_FILE = "hetero.csv"
P_CLUSTERS_FILE = "clusters.csv"
P_FIG_ATT_FILE = "fig_att_per_lag.csv"
P_FIG_HETERO_FILE = "fig_hetero_psi.csv"
P_FIG_CLUSTER_FILE = "fig_cluster_effects.csv"

# Simulation outputs
P_REPORT_FILE = "report.json"
P_TRACE_FILE = "trace.csv"

##### Panel #####
NEVER_TOKEN = "never"
ADOPTION_GAP = 12  # months; "substantially different" adoption times

##### Basis #####
BASIS_KIND = "natural"  # natural | polynomial | bspline
BASIS_DF = 4  # total columns, intercept included
BASIS_KINDS = ("natural", "polynomial", "bspline")

##### Alternating Least Squares #####
ALS_TOL = 1e-6
ALS_MAX_ITERS = 500
ALS_COND_LIMIT = 1e12
ALS_MONOTONE_SLACK = 1e-9  # relative increase tolerated before warning

##### Covariance Selection #####
PREC_TOL = 1e-7
PREC_MAX_SWEEPS = 10_000
PREC_JITTER = 1e-8  # times trace(S)/n
PREC_EIG_FLOOR = 1e-12  # relative eigenvalue below which S counts as degenerate

##### MCMC #####
MC_BETA_VARIANCE = 1e6
MC_A_VARIANCE = 1e6
MC_ITERS = 4000
MC_BURNIN = 2000
MC_THIN = 1
MC_SEED = 20240501

##### Estimands #####
EST_LEVEL = 0.95
EST_MAX_LAG = 9
EST_HETERO_WINDOW = 2  # L=2 -> three lags
EST_HETERO_SPLINE_DF = 1  # lag columns besides the intercept
EST_SMOOTH_DF = 4  # intercept + 3 df natural spline
EST_PSI_LO = 0.25
EST_PSI_HI = 0.75
EST_CLUSTER_K = 5
EST_CLUSTER_RESTARTS = 10
EST_KMEANS_N_INIT = 10

##### Simulation #####
SIM_REPS = 200
SIM_ITERS = 2000
SIM_BURNIN = 1000
SIM_THREADS = 1
SIM_DESIGNS = ("placebo", "confounder", "misspec-a", "smooth-delta", "hetero")

##### Diagnostics #####
DIAG_PARAM_FRACTION = 0.1  # parameter subsample for ESS / R-hat
DIAG_RHAT_LIMIT = 1.05
DIAG_MIN_ESS = 100
