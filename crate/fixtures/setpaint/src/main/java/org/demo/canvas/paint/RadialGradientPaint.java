package org.demo.canvas.paint;

public class RadialGradientPaint extends MultipleGradientPaint {
    private final float cx;
    private final float cy;
    private final float radius;

    public RadialGradientPaint(float cx, float cy, float radius, float[] fractions, Color[] colors) {
        super(fractions, colors);
        if (radius <= 0) {
            throw new IllegalArgumentException("radius must be positive");
        }
        this.cx = cx;
        this.cy = cy;
        this.radius = radius;
    }

    @Override
    public String describe() {
        return "radial(" + cx + "," + cy + ";" + radius + ";" + getStopCount() + ")";
    }
}
