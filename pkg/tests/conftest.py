from hypothesis import settings

# Property tests check analytic identities; per-example deadlines only add
# noise on loaded machines.
settings.register_profile("default", deadline=None)
settings.load_profile("default")
