# Theme Configuration
THEME_CONFIG = {
    "light_theme": {
        "background": "#FFFFFF",
        "text": "#262730",
        "secondary_text": "#6C757D",
        "grid": "#EEEEEE"
    },
    "zone_colors": [
        "#1E88E5", "#28A745", "#FFC107", "#8E44AD", "#17A2B8",
        "#FD7E14", "#6C757D", "#E83E8C", "#20C997", "#343A40"
    ],
    "markers": {
        "sep": {"marker": "x", "color": "#FF4B4B", "size": 120, "linewidth": 2.5},
        "system_sep": {"marker": "o", "color": "#0E1117", "size": 90},
        "bus_size_range": (30.0, 300.0)
    }
}

# Matplotlib settings applied before every figure
CHART_STYLE = {
    "font.family": "DejaVu Sans",
    "font.size": 9,
    "axes.grid": True,
    "grid.color": THEME_CONFIG["light_theme"]["grid"],
    "axes.edgecolor": THEME_CONFIG["light_theme"]["secondary_text"],
    "figure.figsize": (7.0, 5.0),
    "svg.fonttype": "none",
    "svg.hashsalt": "izone"
}
