#ifndef _LINUX_FS_H
#define _LINUX_FS_H

#include <linux/types.h>

struct inode;
struct file;
struct poll_table_struct;

struct file_operations {
	struct module *owner;
	long (*unlocked_ioctl) (struct file *, unsigned int, unsigned long);
	long (*compat_ioctl) (struct file *, unsigned int, unsigned long);
	int (*open) (struct inode *, struct file *);
	int (*release) (struct inode *, struct file *);
	unsigned int (*poll) (struct file *, struct poll_table_struct *);
	long (*llseek) (struct file *, long, int);
};

extern long noop_llseek(struct file *file, long offset, int whence);

#endif
