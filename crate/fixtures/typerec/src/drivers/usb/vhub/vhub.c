#include <linux/miscdevice.h>
#include <linux/vhub.h>

struct vhub {
	struct vhub_dev_info devs[VHUB_MAX_DEVICES];
	unsigned int ndevs;
};

static struct vhub the_hub;

static int vhub_get_devices(struct vhub *hub, struct vhub_dev_list __user *arg)
{
	__u32 count;

	if (get_user(count, &arg->count))
		return -EFAULT;
	if (count > hub->ndevs)
		count = hub->ndevs;
	if (copy_to_user(arg->devices, hub->devs, count * sizeof(struct vhub_dev_info)))
		return -EFAULT;
	return put_user(count, &arg->count);
}

static int vhub_attach(struct vhub *hub, struct vhub_dev_info __user *arg)
{
	struct vhub_dev_info info;

	if (hub->ndevs >= VHUB_MAX_DEVICES)
		return -ENOSPC;
	if (copy_from_user(&info, arg, sizeof(info)))
		return -EFAULT;
	hub->devs[hub->ndevs++] = info;
	return 0;
}

static long vhub_ioctl(struct file *file, unsigned int cmd, unsigned long arg)
{
	struct vhub *hub = file->private_data;

	switch (cmd) {
	case VHUB_GET_DEVICES:
		return vhub_get_devices(hub, (void __user *)arg);
	case VHUB_ATTACH:
		return vhub_attach(hub, (void __user *)arg);
	case VHUB_RESET:
		hub->ndevs = 0;
		return 0;
	default:
		return -ENOTTY;
	}
}

static int vhub_open(struct inode *inode, struct file *file)
{
	file->private_data = &the_hub;
	return 0;
}

static const struct file_operations vhub_fops = {
	.owner = THIS_MODULE,
	.open = vhub_open,
	.unlocked_ioctl = vhub_ioctl,
};

static struct miscdevice vhub_misc = {
	.minor = MISC_DYNAMIC_MINOR,
	.name = "vhub",
	.fops = &vhub_fops,
};
