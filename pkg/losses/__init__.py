"""Point localization and classification losses."""
