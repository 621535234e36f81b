##### Placebo #####
PLACEBO_SHIFT = (5.0, 10.0, 20.0, 5.0, 4.0)  # zero at every later lag
PLACEBO_WINDOW_LO = 40  # months before the true adoption
PLACEBO_WINDOW_HI = 10
PLACEBO_SCORED_LAGS = 10  # lags 0..9

##### Synthetic Panel #####
SYN_UNITS = 40
SYN_TIMES = 156
SYN_COVARIATES = 4
SYN_ADOPT_LO = 100
SYN_ADOPT_HI = 150
SYN_LEVEL = 100.0
SYN_LEVEL_SD = 10.0
SYN_SLOPE_SD = 5.0  # trend change over the whole grid
SYN_A_DIAG = 0.3
SYN_A_NEIGHBOR = 0.1
SYN_NOISE_SD = 2.0
SYN_NOISE_RHO = 0.5  # chain covariance sd^2 * rho^|i-j|
SYN_BURN = 50  # VAR steps discarded before t = 1
SYN_SEED = 156

##### Confounder #####
CONF_UNITS = 20
CONF_TIMES = 156
CONF_TAU = 5.0
CONF_RHO_GRID = (0.0, 0.5, 0.9)
CONF_GAMMA_T_GRID = (0.0, 1.0)
CONF_GAMMA_Y_GRID = (0.0, 1.0)
CONF_HAZARD_INTERCEPT = -3.0
CONF_WINDOW = (75, 144)
CONF_FALLBACK = 145
CONF_TREND = 0.1
CONF_SPLINE_DF = 6  # intercept + 5 df natural spline
CONF_FORECAST_POINTS = 10

##### A Misspecification #####
MIS_UNITS = 76
MIS_TIMES = 156
MIS_LEVEL = 400.0
MIS_SLOPE = -1.0 / 3.0
MIS_SIGMA_SCALE = 400.0
MIS_SIGMA_RHO = 0.8
MIS_CROSS_LAG = 0.4  # A[i, i+1] for odd 1-based i
MIS_BASIS_DF = 2

##### Smooth Delta #####
SMOOTH_BASELINE = 10.0
SMOOTH_COEF = (-2.0, -4.0, -6.0)  # on a 3 df natural spline in the lag

##### Heterogeneous Effects #####
# stand-in surface, linear in the first two covariates
HETERO_BASE = 5.0
HETERO_COEF = (2.0, -1.5)  # on X1, X2
HETERO_WINDOWS = (9, 2)
