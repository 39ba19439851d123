from decouple import config


JOBS = config("POSTED_PRICE_JOBS", default=1, cast=int)
PROFILE_BUDGET = config("POSTED_PRICE_PROFILE_BUDGET", default=10**7, cast=int)
THRESHOLD_BUDGET = config("POSTED_PRICE_THRESHOLD_BUDGET", default=10**7, cast=int)
LOG_LEVEL = config("POSTED_PRICE_LOG_LEVEL", default="INFO")
MC_CHUNKS = config("POSTED_PRICE_MC_CHUNKS", default=16, cast=int)

VERSION = "0.3.0"
