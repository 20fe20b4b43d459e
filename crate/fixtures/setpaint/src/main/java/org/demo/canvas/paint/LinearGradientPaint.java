package org.demo.canvas.paint;

public class LinearGradientPaint extends MultipleGradientPaint {
    private final float x1;
    private final float y1;
    private final float x2;
    private final float y2;

    public LinearGradientPaint(float x1, float y1, float x2, float y2, float[] fractions, Color[] colors) {
        super(fractions, colors);
        this.x1 = x1;
        this.y1 = y1;
        this.x2 = x2;
        this.y2 = y2;
    }

    @Override
    public String describe() {
        return "linear(" + x1 + "," + y1 + "->" + x2 + "," + y2 + ";" + getStopCount() + ")";
    }
}
