package org.demo.canvas;

import java.util.ArrayList;
import java.util.List;

import org.demo.canvas.paint.Color;
import org.demo.canvas.paint.Paint;

public class Canvas {
    private final PageLayout layout;
    private final List<String> operations = new ArrayList<>();
    private Paint paint = Color.BLACK;

    public Canvas(PageLayout layout) {
        this.layout = layout;
    }

    public void setPaint(Paint paint) {
        if (paint == null) {
            throw new IllegalArgumentException("paint must not be null");
        }
        this.paint = paint;
        operations.add("paint " + paint.describe());
    }

    public Paint getPaint() {
        return paint;
    }

    public void fillRect(float x, float y, float w, float h) {
        operations.add("fillRect " + paint.describe());
    }

    public void fillOval(float x, float y, float w, float h) {
        operations.add("fillOval " + paint.describe());
    }

    public List<String> getOperations() {
        return operations;
    }

    public PageLayout getLayout() {
        return layout;
    }
}
