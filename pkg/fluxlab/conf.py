from django.conf import settings


def get_setting(section, key, override=None):
    """Numerical default ``settings.WEHRLFLUX[section][key]`` unless overridden."""
    if override is not None:
        return override
    return settings.WEHRLFLUX[section][key]
