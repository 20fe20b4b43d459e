package org.demo.canvas;

import static org.junit.Assert.assertEquals;
import static org.junit.Assert.assertTrue;

import org.demo.canvas.paint.Color;
import org.demo.canvas.paint.LinearGradientPaint;
import org.junit.Test;

public class CanvasTest {
    @Test
    public void testSetPaintLinearGradient() {
        Canvas canvas = new Canvas(PageLayout.DEFAULT);
        LinearGradientPaint paint = new LinearGradientPaint(0f, 0f, 100f, 100f,
                new float[] {0f, 1f}, new Color[] {Color.RED, Color.BLUE});
        canvas.setPaint(paint);
        canvas.fillRect(10f, 10f, 50f, 50f);
        assertEquals(paint, canvas.getPaint());
    }

    @Test
    public void testSetPaintNoCheck() {
        Canvas canvas = new Canvas(PageLayout.DEFAULT);
        canvas.setPaint(Color.RED);
        canvas.fillRect(0f, 0f, 5f, 5f);
    }
}
