import os
import sys
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

import numpy as np
import pandas as pd
import plotly.graph_objects as go

INPUT_DIR = "./data/figure_2"
OUTPUT_DIR = "./figures"

DESIGN_LABELS = {
    "gamma": "Varying Γ",
    "graph": "Varying B",
}
COLORS = {
    "gamma": "black",
    "graph": "gray",
}


def load_series(input_dir):
    frames = [pd.read_csv(f"{input_dir}/{design}.csv") for design in DESIGN_LABELS]
    data = pd.concat(frames, ignore_index=True)
    data = data[(data["nonzeros"] > 0) & (data["error"] > 0)]
    return (data.groupby(["design", "level"], as_index=False)
            .agg(nonzeros=("nonzeros", "mean"), error=("error", "mean"), error_sd=("error", "std")))


def plot_data(series, slopes):
    fig = go.Figure()
    for design, label in DESIGN_LABELS.items():
        df = series[series["design"] == design].sort_values("nonzeros")
        slope = slopes.loc[slopes["design"] == design, "slope"]
        if len(slope):
            label = f"{label} (slope {slope.iloc[0]:.2f})"
        fig.add_trace(go.Scatter(
            x=df["nonzeros"],
            y=df["error"],
            error_y=dict(type="data", array=df["error_sd"].fillna(0.0)),
            mode="lines+markers",
            name=label,
            line=dict(color=COLORS[design]),
        ))

        # reference line of slope 1/2 through the first point
        if len(df):
            x0, y0 = df["nonzeros"].iloc[0], df["error"].iloc[0]
            x = np.array([df["nonzeros"].min(), df["nonzeros"].max()])
            fig.add_trace(go.Scatter(
                x=x,
                y=y0 * np.sqrt(x / x0),
                mode="lines",
                line=dict(color=COLORS[design], dash="dot"),
                showlegend=False,
            ))

    fig.update_layout(
        xaxis=dict(title="Number of nonzero parameters", type="log"),
        yaxis=dict(title="γ<sub>err</sub> + β<sub>err</sub>", type="log"),
        font=dict(family='Times New Roman', size=18, color='black'),
        margin=dict(l=80, r=50, t=10, b=60),
        legend=dict(x=0.02, y=0.98),
        template='simple_white',
        height=400,
        width=700,
    )
    fig.write_image(os.path.join(OUTPUT_DIR, "figure_2.pdf"))


if __name__ == "__main__":
    os.makedirs(OUTPUT_DIR, exist_ok=True)
    series = load_series(INPUT_DIR)
    slopes = pd.read_csv(f"{INPUT_DIR}/slopes.csv")
    series.to_csv(f"{OUTPUT_DIR}/figure_2_series.csv", index=False)
    plot_data(series, slopes)
    print(slopes.to_string(index=False))
