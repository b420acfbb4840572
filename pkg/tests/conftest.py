"""Suite-wide hypothesis profile: deterministic example generation so the
acceptance-oriented suite gives the same verdict on every run."""

from hypothesis import HealthCheck, settings

settings.register_profile(
    "deterministic",
    derandomize=True,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("deterministic")
