from django.conf import settings

DEFAULTS = {
    'TRUNCATION_ORDER': 2,
    'MAX_TRUNCATION_ORDER': 4,
    'STAR_ORDER': 2,
    'TEST_MONOMIAL_DEGREE': 4,
    'ASSOCIATIVITY_SOLVE_DEGREE': 2,
    'ASSOCIATIVITY_CHECK_DEGREE': 3,
    'ANSATZ_COEFFICIENT_DEGREE': 2,
    'ANSATZ_OPERATOR_ORDER': 3,
    'TILE_REFINEMENT': 1,
    'FINENESS_RADIUS': None,
    'SCHEMA_VERSION': '1.0',
    'EXPORT_SCHEMA_ID': 'tightstack.descent-data/1',
    'TOOL_NAME': 'tightstack',
    'TOOL_VERSION': '0.1.0',
    'LOG_LEVEL': 'WARNING',
}


def get_setting(name):
    """Return a computational setting, falling back to the packaged default."""
    if name not in DEFAULTS:
        raise KeyError(f"Unknown deformation setting: {name}")
    if not settings.configured:
        return DEFAULTS[name]
    return getattr(settings, 'DEFORMATION', {}).get(name, DEFAULTS[name])
