# Reference energy for ground truth and HU conversion
REFERENCE_ENERGY_KEV = 70.0
MU_WATER = 0.0193  # mm^-1 at 70 keV

# Full-scale acquisition
FULL_IMAGE_SIZE = 416
FULL_NUM_VIEWS = 640
FULL_NUM_BINS = 641
FIELD_OF_VIEW_MM = 416.0
AIR_SCAN_PHOTONS = 2.0e7

# Fan geometry rules
SOURCE_DISTANCE_FACTOR = 2.5  # source_to_isocenter = factor * FOV diagonal
DETECTOR_DISTANCE_FACTOR = 2.0  # source_to_detector = factor * source_to_isocenter
FAN_MARGIN = 1.02

# Projector sampling step as a fraction of the pixel size
RAY_STEP_FRACTION = 0.5

# Partial volume: equiangular sub-rays per detector bin
PARTIAL_VOLUME_SUBRAYS = 3

# Segmentation / classical MAR
METAL_THRESHOLD_HU = 2000.0
NMAR_AIR_THRESHOLD_HU = -500.0
NMAR_BONE_THRESHOLD_HU = 350.0
NMAR_EPSILON = 1e-6
BONE_THRESHOLD_HU = 350.0

# Loss weights and optimizer
SINO_BETA = 0.1
ALPHA_SINO = 1.0
ALPHA_FBP = 1.0
ADAM_LR = 1e-4
ADAM_BETAS = (0.5, 0.999)
ADAM_EPS = 1e-8

# Metrics
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_SIGMA = 1.5
SSIM_WINDOW = 11
SSIM_DATA_RANGE = 4095.0

# Display windows (HU) for PNG panels
DISPLAY_WINDOWS = {
    "body": (-480.0, 560.0),
    "soft": (-175.0, 275.0),
    "head": (-1000.0, 1600.0),
    "difference": (-200.0, 200.0),
}

# 120 kVp spectrum approximated by 10 energy bins (keV, relative fluence)
SPECTRUM_120KVP_ENERGIES = (30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0, 110.0, 120.0)
SPECTRUM_120KVP_FLUENCE = (0.03, 0.09, 0.13, 0.15, 0.15, 0.14, 0.12, 0.10, 0.06, 0.03)

# Mass attenuation coefficients (cm^2/g) at the spectrum energies.
# Values follow the NIST XCOM / X-ray mass attenuation tables, log-log interpolated
# at energies the tables do not list. Gold includes its K-edge at 80.7 keV.
MASS_ATTENUATION = {
    "water": (0.3756, 0.2683, 0.2269, 0.2059, 0.1930, 0.1837, 0.1767, 0.1707, 0.1657, 0.1613),
    "bone": (1.331, 0.6655, 0.4242, 0.3148, 0.2616, 0.2229, 0.2023, 0.1855, 0.1759, 0.1676),
    "titanium": (4.972, 2.214, 1.213, 0.7661, 0.5446, 0.4052, 0.3284, 0.2721, 0.2419, 0.2172),
    "iron": (8.176, 3.629, 1.958, 1.205, 0.8258, 0.5952, 0.4642, 0.3717, 0.3200, 0.2790),
    "gold": (26.8, 12.9, 7.256, 4.528, 3.065, 2.185, 6.747, 5.158, 4.058, 3.260),
}

# Nominal metal densities (g/cm^3)
METAL_DENSITIES = {
    "titanium": 4.5,
    "iron": 7.87,
    "gold": 19.32,
}
